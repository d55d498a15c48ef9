from pydantic import BaseModel, ConfigDict


class Model(BaseModel):
    """Strict, immutable base for every document-facing config type."""

    model_config = ConfigDict(extra="forbid", frozen=True, strict=True, allow_inf_nan=False)
