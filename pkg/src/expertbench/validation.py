"""Parameter and input validation helpers."""

from numbers import Real

from sklearn.utils.validation import check_is_fitted  # noqa: F401  (re-export)


def check_in_range(value, name, low=None, high=None, *, low_closed=True, high_closed=True):
    """Raise ``ValueError`` unless ``low <= value <= high`` (bounds optional)."""
    if not isinstance(value, Real) or isinstance(value, bool):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    if low is not None and (value < low or (not low_closed and value == low)):
        op = ">=" if low_closed else ">"
        raise ValueError(f"{name} must be {op} {low}, got {value}")
    if high is not None and (value > high or (not high_closed and value == high)):
        op = "<=" if high_closed else "<"
        raise ValueError(f"{name} must be {op} {high}, got {value}")
    return value


def check_choice(value, name, choices):
    if value not in choices:
        raise ValueError(f"{name} must be one of {list(choices)}, got {value!r}")
    return value


def check_dataset(dataset):
    from .corpus import Dataset

    if not isinstance(dataset, Dataset):
        raise TypeError(f"expected a Dataset, got {type(dataset).__name__}")
    return dataset
