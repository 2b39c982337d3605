"""
Artifact Storage

Dataset text files, HMM model JSON, and the generic JSON/CSV helpers the
other modules use for their own formats.

Dataset format (bit-exact):
    #hmmforge-seq v1 m=<int>
    <space-separated token ids>      (one sequence per line)
"""

import json
import logging
import re
from pathlib import Path
from typing import List, Literal, Sequence, Type, TypeVar, Union

import pandas as pd
from pydantic import BaseModel, Field, ValidationError

from hmm.errors import DatasetFormatError
from hmm.params import HmmParams, SequenceDataset

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
SchemaT = TypeVar("SchemaT", bound=BaseModel)

DATASET_HEADER = re.compile(r"^#hmmforge-seq v1 m=(\d+)$")


class ModelFile(BaseModel):
    """On-disk HMM parameters, rows in row-major order."""
    version: Literal[1] = 1
    d: int = Field(..., ge=1)
    m: int = Field(..., ge=2)
    pi: List[float]
    A: List[List[float]]
    C: List[List[float]]


def write_dataset(path: PathLike, dataset: SequenceDataset) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"#hmmforge-seq v1 m={dataset.m}"]
    lines.extend(" ".join(str(int(tok)) for tok in seq) for seq in dataset.sequences)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
    logger.info(f"[STORAGE] Wrote {dataset.n_sequences} sequences to {path}")
    return path


def read_dataset(path: PathLike) -> SequenceDataset:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().split("\n")

    if not lines or not lines[0]:
        raise DatasetFormatError(f"{path}: empty dataset file")
    header = DATASET_HEADER.match(lines[0].strip())
    if header is None:
        raise DatasetFormatError(f"{path}: bad header {lines[0]!r}")
    m = int(header.group(1))

    sequences = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            sequences.append([int(tok) for tok in line.split()])
        except ValueError:
            raise DatasetFormatError(f"{path}:{lineno}: non-integer token")

    try:
        return SequenceDataset(m=m, sequences=tuple(sequences))
    except ValueError as e:
        raise DatasetFormatError(f"{path}: {e}") from e


def write_json(path: PathLike, document: BaseModel) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(document.model_dump_json())
        f.write("\n")
    return path


def read_json(path: PathLike, schema: Type[SchemaT]) -> SchemaT:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            return schema.model_validate_json(f.read())
    except ValidationError as e:
        raise DatasetFormatError(f"{path}: not a valid {schema.__name__}: {e}") from e


def read_raw_json(path: PathLike) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise DatasetFormatError(f"{path}: invalid JSON: {e}") from e


def model_to_file(params: HmmParams) -> ModelFile:
    return ModelFile(
        d=params.d,
        m=params.m,
        pi=params.pi.tolist(),
        A=params.A.tolist(),
        C=params.C.tolist(),
    )


def model_from_file(document: ModelFile) -> HmmParams:
    try:
        params = HmmParams(pi=document.pi, A=document.A, C=document.C)
    except ValueError as e:
        raise DatasetFormatError(f"invalid model parameters: {e}") from e
    if params.d != document.d or params.m != document.m:
        raise DatasetFormatError(
            f"declared d={document.d}, m={document.m} but arrays give d={params.d}, m={params.m}"
        )
    return params


def write_model(path: PathLike, params: HmmParams) -> Path:
    return write_json(path, model_to_file(params))


def read_model(path: PathLike) -> HmmParams:
    return model_from_file(read_json(path, ModelFile))


def write_csv(path: PathLike, frame: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def read_csv(path: PathLike, columns: Sequence[str]) -> pd.DataFrame:
    frame = pd.read_csv(path, float_precision="round_trip")
    if list(frame.columns) != list(columns):
        raise DatasetFormatError(f"{path}: expected columns {list(columns)}, got {list(frame.columns)}")
    return frame


def write_curve(path: PathLike, points: Sequence[tuple]) -> Path:
    """Loss curve as `iteration,loss`."""
    frame = pd.DataFrame(list(points), columns=["iteration", "loss"])
    frame["iteration"] = frame["iteration"].astype("int64")
    return write_csv(path, frame)


def read_curve(path: PathLike) -> List[tuple]:
    frame = read_csv(path, ["iteration", "loss"])
    return [(int(i), float(v)) for i, v in zip(frame["iteration"], frame["loss"])]
