"""
CSV loader for estimation datasets
Reads per-mode (x, y) samples and vacuum calibration samples and hands them to
the estimator as one EstimationInput per OAM mode
"""

from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from app.errors import MalformedData
from app.estimation.estimation import EstimationInput
from app.utils.logging_setup import get_logger

logger = get_logger(__name__)

SAMPLE_COLUMNS = ["mode_index", "slot_index", "x", "y"]
VACUUM_COLUMNS = ["slot_index", "y0"]


class EstimationDataLoader:
    """
    Loader for the estimate subcommand's input files.

    The samples file holds columns mode_index, slot_index, x, y; the vacuum file
    holds slot_index, y0 and is shared by every mode unless it also carries a
    mode_index column.
    """

    def __init__(self, samples_path: Union[str, Path], vacuum_path: Union[str, Path], epsilon_pe: float = 0.01):
        self.samples_path = Path(samples_path)
        self.vacuum_path = Path(vacuum_path)
        self.epsilon_pe = epsilon_pe
        self.samples_df: Optional[pd.DataFrame] = None
        self.vacuum_df: Optional[pd.DataFrame] = None

    @staticmethod
    def _read(path: Path, required: Sequence[str]) -> pd.DataFrame:
        if not path.exists():
            raise MalformedData(f"data file not found: {path}")
        try:
            df = pd.read_csv(path, float_precision="round_trip")
        except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
            raise MalformedData(f"cannot parse {path}: {e}") from e

        missing = [col for col in required if col not in df.columns]
        if missing:
            raise MalformedData(f"{path.name} is missing columns {missing}")

        for col in required:
            converted = pd.to_numeric(df[col], errors="coerce")
            if converted.isna().any():
                row = int(converted.isna().to_numpy().argmax())
                raise MalformedData(f"{path.name}: non-numeric value in column {col!r} at row {row}")
            df[col] = converted
        return df

    def load(self) -> List[EstimationInput]:
        """
        Load both files and split them by mode.

        Returns:
            One EstimationInput per mode, ordered by mode_index, rows ordered by slot_index
        """
        logger.info(f"Loading estimation samples from {self.samples_path}")
        self.samples_df = self._read(self.samples_path, SAMPLE_COLUMNS)
        self.vacuum_df = self._read(self.vacuum_path, VACUUM_COLUMNS)
        per_mode_vacuum = "mode_index" in self.vacuum_df.columns

        inputs = []
        for mode, group in self.samples_df.sort_values(["mode_index", "slot_index"]).groupby("mode_index", sort=True):
            if per_mode_vacuum:
                vacuum = self.vacuum_df[self.vacuum_df["mode_index"] == mode]
            else:
                vacuum = self.vacuum_df
            y0 = vacuum.sort_values("slot_index")["y0"].to_numpy(dtype=float)
            inputs.append(
                EstimationInput(
                    x=group["x"].to_numpy(dtype=float),
                    y=group["y"].to_numpy(dtype=float),
                    y0=y0,
                    epsilon_pe=self.epsilon_pe,
                )
            )
        logger.info(f"Loaded {len(self.samples_df)} samples over {len(inputs)} mode(s)")
        return inputs

    def vacuum_samples(self) -> np.ndarray:
        """Every calibration sample, for the merged-channel estimate."""
        if self.vacuum_df is None:
            self.load()
        return self.vacuum_df.sort_values("slot_index")["y0"].to_numpy(dtype=float)


def dataset_frames(inputs: Sequence[EstimationInput]) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Samples and vacuum tables in the loader's format; vacuum rows keep their mode_index."""
    samples = pd.concat(
        [
            pd.DataFrame({"mode_index": m, "slot_index": np.arange(d.n_samples), "x": d.x, "y": d.y})
            for m, d in enumerate(inputs)
        ],
        ignore_index=True,
    )
    vacuum = pd.concat(
        [pd.DataFrame({"mode_index": m, "slot_index": np.arange(d.n_vacuum), "y0": d.y0}) for m, d in enumerate(inputs)],
        ignore_index=True,
    )
    return samples, vacuum


def write_dataset(
    inputs: Sequence[EstimationInput],
    samples_path: Union[str, Path],
    vacuum_path: Union[str, Path],
) -> None:
    samples, vacuum = dataset_frames(inputs)
    samples.to_csv(samples_path, index=False, float_format="%.17g")
    vacuum.to_csv(vacuum_path, index=False, float_format="%.17g")
    logger.info(f"Wrote {len(samples)} samples to {samples_path}")
