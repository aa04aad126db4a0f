from __future__ import annotations

import argparse
import logging
from pathlib import Path

from src.composite_opt.api.config_file import load_experiment_config
from src.composite_opt.infrastructure.datasets import load_dataset, write_dataset_csv

LOGGER = logging.getLogger(__name__)


def export(config_path: Path, out_path: Path) -> Path:
    """Materialize the data source of an experiment config as a dataset CSV."""
    config = load_experiment_config(config_path)
    LOGGER.info("Exporting data source '%s' from %s", config.data.kind, config_path)
    dataset = load_dataset(config.data, config.loss, config.network.output_dim)
    write_dataset_csv(dataset, out_path)
    LOGGER.info("  → %d samples written to %s", dataset.num_samples, out_path)
    return out_path


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = argparse.ArgumentParser(description="Write a configured dataset source to CSV")
    parser.add_argument("--config", required=True, type=Path)
    parser.add_argument("--out", required=True, type=Path)
    args = parser.parse_args()
    export(args.config, args.out)
