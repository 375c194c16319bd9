from typing import Annotated

from pydantic import BaseModel, ConfigDict, Field

AppId = Annotated[str, Field(min_length=1)]
Count = Annotated[int, Field(ge=0)]
Percentage = Annotated[float, Field(ge=0.0, le=100.0)]


def percent(part: int, whole: int) -> float:
    """part/whole as a percentage with one decimal; 0.0 for an empty whole."""
    if whole <= 0:
        return 0.0
    return round(100.0 * part / whole, 1)


class LedgerEntry(BaseModel):
    """A per-app failure recorded instead of aborting the corpus."""
    model_config = ConfigDict(frozen=True)

    app_id: str
    stage: str
    error: str
    detail: str

    @classmethod
    def from_exception(cls, app_id: str, stage: str, error: Exception) -> "LedgerEntry":
        return cls(
            app_id=app_id,
            stage=stage,
            error=type(error).__name__,
            detail=getattr(error, "detail", None) or str(error),
        )
