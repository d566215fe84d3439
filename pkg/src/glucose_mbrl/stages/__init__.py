"""
Episode step stages

This package provides the stages a StepPipe chains to run one 5-minute environment step.
All stages can be imported directly from this package.
"""

from glucose_mbrl.stages.advance_patient import AdvancePatient
from glucose_mbrl.stages.check_termination import CheckTermination
from glucose_mbrl.stages.decide_bolus import DecideBolus
from glucose_mbrl.stages.deliver_insulin import DeliverInsulin
from glucose_mbrl.stages.read_cgm import ReadCgm
from glucose_mbrl.stages.record_step import RecordStep
