from typing import Any, TypeVar

from pydantic import BaseModel

M = TypeVar("M", bound=BaseModel)


def modify_config(original: M, **changes: Any) -> M:
    """
    Create a modified, re-validated copy of a configuration model.

    Nested models may be given either as model instances or as dicts.

    Args:
        original: Source model to copy
        **changes: Field values to replace (must be fields the model declares)

    Raises:
        ValueError: When attempting to modify undeclared fields, or when the result fails validation

    Example:
        modify_config(config, agent="bb", episodes=30, cgm={"noise_std": 5.0})
    """
    valid_attrs = set(type(original).model_fields)

    invalid_attrs = set(changes.keys()) - valid_attrs
    if invalid_attrs:
        raise ValueError(f"Invalid {type(original).__name__} fields: {sorted(invalid_attrs)}, not declared on the model")

    values = original.model_dump()
    for attr, value in changes.items():
        values[attr] = value.model_dump() if isinstance(value, BaseModel) else value

    return type(original).model_validate(values)
