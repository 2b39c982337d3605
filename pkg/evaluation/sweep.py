"""
Candidate-Dimension Sweep

Fits every requested method at every candidate hidden dimension, scores it
on the validation set, and collects one row per cell. Cells are independent;
with jobs > 1 they run in a process pool and come back in submission order.
"""

import logging
import time
from dataclasses import asdict, dataclass, field, replace
from multiprocessing import Pool
from typing import List, Optional, Sequence, Tuple

import pandas as pd
from tqdm import tqdm

from config.settings import get_config
from evaluation.harness import FilterPredictor, SpectralPredictor, UniformPredictor, evaluate, random_baseline
from hmm.errors import GradientOverflowError, RankDeficiencyError
from hmm.params import HmmParams, SequenceDataset, param_count
from hmm.storage import PathLike, read_csv, write_csv
from learners.baum_welch import EmConfig, fit
from learners.beliefnet import GridSpec, TrainConfig, grid_search, train
from learners.spectral import fit_spectral, spectral_param_count

logger = logging.getLogger(__name__)

METHODS = ("beliefnet", "baumwelch", "spectral", "random", "oracle")
COLUMNS = ["candidate_d", "method", "loss", "params", "seconds", "status"]

STATUS_OK = "ok"
STATUS_RANK_DEFICIENCY = "rank deficiency"
STATUS_GRADIENT_OVERFLOW = "gradient overflow"


@dataclass(frozen=True)
class SweepRow:
    candidate_d: int
    method: str
    loss: Optional[float]
    params: int
    seconds: float
    status: str = STATUS_OK

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK


@dataclass
class SweepReport:
    rows: List[SweepRow] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([asdict(row) for row in self.rows], columns=COLUMNS)
        return frame.astype({"candidate_d": "int64", "params": "int64", "loss": "float64"})

    def losses(self, method: str) -> List[Tuple[int, Optional[float]]]:
        return [(row.candidate_d, row.loss) for row in self.rows if row.method == method]

    def summary_table(self) -> str:
        """Methods down, candidate dimensions across; failed cells show their status."""
        cells = {}
        for row in self.rows:
            cells[(row.method, row.candidate_d)] = f"{row.loss:.4f}" if row.ok else row.status
        methods = list(dict.fromkeys(row.method for row in self.rows))
        dims = sorted({row.candidate_d for row in self.rows})
        table = pd.DataFrame(
            [[cells.get((method, d), "") for d in dims] for method in methods],
            index=methods,
            columns=[f"d={d}" for d in dims],
        )
        return table.to_string()

    def write_csv(self, path: PathLike):
        return write_csv(path, self.to_frame())

    @classmethod
    def read_csv(cls, path: PathLike) -> "SweepReport":
        frame = read_csv(path, COLUMNS)
        rows = [
            SweepRow(
                candidate_d=int(r.candidate_d),
                method=str(r.method),
                loss=None if pd.isna(r.loss) else float(r.loss),
                params=int(r.params),
                seconds=float(r.seconds),
                status=str(r.status),
            )
            for r in frame.itertuples(index=False)
        ]
        return cls(rows=rows)


@dataclass(frozen=True)
class SweepCell:
    """Everything one worker needs to fit and score a single (method, d) pair."""
    method: str
    candidate_d: int
    train: SequenceDataset
    val: SequenceDataset
    seed: int
    truth: Optional[HmmParams] = None
    train_config: Optional[TrainConfig] = None
    em_config: Optional[EmConfig] = None
    grid: Optional[GridSpec] = None


def _cell_param_count(cell: SweepCell) -> int:
    m = cell.train.m
    if cell.method == "spectral":
        return spectral_param_count(cell.candidate_d, m)
    if cell.method == "random":
        return 0
    if cell.method == "oracle":
        return param_count(cell.truth.d, m)
    return param_count(cell.candidate_d, m)


def _fit_and_score(cell: SweepCell) -> float:
    d, m = cell.candidate_d, cell.train.m
    if cell.method == "random":
        return evaluate(UniformPredictor(m), cell.val)
    if cell.method == "oracle":
        return evaluate(FilterPredictor(cell.truth, name="oracle"), cell.val)
    if cell.method == "spectral":
        return evaluate(SpectralPredictor(fit_spectral(cell.train, d)), cell.val)
    if cell.method == "baumwelch":
        cfg = replace(cell.em_config or EmConfig(), seed=cell.seed)
        params, _ = fit(cell.train, d, cfg, cell.val)
        return evaluate(FilterPredictor(params, name="baumwelch"), cell.val)
    if cell.method == "beliefnet":
        cfg = replace(cell.train_config or TrainConfig(), seed=cell.seed)
        if cell.grid is not None:
            params = grid_search(cell.train, d, cell.grid, cell.val, base=cfg).params
        else:
            params, _ = train(cell.train, d, cfg, cell.val)
        return evaluate(FilterPredictor(params, name="beliefnet"), cell.val)
    raise ValueError(f"unknown method {cell.method!r}")


def run_cell(cell: SweepCell) -> SweepRow:
    started = time.perf_counter()
    loss: Optional[float] = None
    status = STATUS_OK
    try:
        loss = _fit_and_score(cell)
    except RankDeficiencyError:
        status = STATUS_RANK_DEFICIENCY
    except GradientOverflowError:
        status = STATUS_GRADIENT_OVERFLOW
    except Exception as e:
        logger.error(f"[SWEEP] {cell.method} at d={cell.candidate_d} failed: {e}")
        status = f"error: {e}"
    seconds = time.perf_counter() - started

    if status != STATUS_OK:
        logger.warning(f"[SWEEP] {cell.method} d={cell.candidate_d}: {status}")
    return SweepRow(
        candidate_d=cell.candidate_d,
        method=cell.method,
        loss=loss,
        params=_cell_param_count(cell),
        seconds=seconds,
        status=status,
    )


def sweep(
    dataset: SequenceDataset,
    val: SequenceDataset,
    methods: Sequence[str],
    candidate_dims: Sequence[int],
    seed: int,
    truth: Optional[HmmParams] = None,
    jobs: int = 1,
    train_config: Optional[TrainConfig] = None,
    em_config: Optional[EmConfig] = None,
    grid: Optional[GridSpec] = None,
) -> SweepReport:
    """
    One fit + evaluate per (method, d), method-major in the order given.
    Baselines (random, oracle) ignore d but get a row per dimension so the
    report lines up with the learners.

    Args:
        dataset: Training sequences shared by every cell
        val: Validation sequences every row is scored on
        methods: Any of beliefnet, baumwelch, spectral, random, oracle
        candidate_dims: Hidden-state counts to try
        seed: Base seed handed to every learner
        truth: Generator parameters, required for the oracle row
        jobs: Worker processes; 1 runs the cells in this process
        train_config: Belief Net settings (defaults when None)
        em_config: Baum-Welch settings (defaults when None)
        grid: Optional Belief Net learning-rate/dropout grid

    Returns:
        SweepReport with one row per (method, d); failed cells keep their row
        with an empty loss and a status string

    Raises:
        ValueError: If a method is unknown, a dimension is not positive, the
            oracle has no generator, or the vocabularies differ
    """
    if not methods or not candidate_dims:
        raise ValueError("sweep needs at least one method and one candidate dimension")
    unknown = [method for method in methods if method not in METHODS]
    if unknown:
        raise ValueError(f"unknown method(s) {unknown}; choose from {list(METHODS)}")
    if any(d < 1 for d in candidate_dims):
        raise ValueError(f"candidate dimensions must be positive, got {list(candidate_dims)}")
    if "oracle" in methods and truth is None:
        raise ValueError("the oracle baseline needs the generator parameters")
    if val.m != dataset.m:
        raise ValueError(f"train m={dataset.m} and validation m={val.m} differ")
    if jobs < 1:
        raise ValueError(f"jobs must be at least 1, got {jobs}")

    cells = [
        SweepCell(
            method=method,
            candidate_d=d,
            train=dataset,
            val=val,
            seed=seed,
            truth=truth,
            train_config=train_config,
            em_config=em_config,
            grid=grid,
        )
        for method in methods
        for d in candidate_dims
    ]
    show_progress = get_config().runtime.progress
    logger.info(f"[SWEEP] {len(cells)} cell(s): methods={list(methods)}, dims={list(candidate_dims)}, jobs={jobs}")

    if jobs == 1:
        rows = [run_cell(cell) for cell in tqdm(cells, desc="Sweep", disable=not show_progress)]
    else:
        with Pool(min(jobs, len(cells))) as pool:
            rows = list(tqdm(pool.imap(run_cell, cells), total=len(cells), desc="Sweep", disable=not show_progress))

    report = SweepReport(rows=rows)
    failed = sum(not row.ok for row in rows)
    logger.info(f"[SWEEP] Done: {len(rows) - failed} ok, {failed} failed (random baseline ln m = {random_baseline(dataset.m):.4f})")
    return report
