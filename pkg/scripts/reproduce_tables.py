"""Train every model from the default config and print the three condition tables.

    python scripts/reproduce_tables.py --out results --workers 4
"""
import argparse
import sys
import time
from pathlib import Path

from affordsim.config import PipelineConfig, experiment_config, load_config, train_models
from affordsim.experiment import export_metrics, metrics_to_text, records_to_text, run_experiment
from affordsim.inverse_model import IMVariant


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config")
    ap.add_argument("--out", default="results")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    cfg = load_config(args.config) if args.config else PipelineConfig()

    t0 = time.time()
    trained = train_models(cfg)
    print(f"trained models in {time.time() - t0:.1f}s", file=sys.stderr)
    models = {v: trained.models(v, cfg.use_corrector, cfg.camera) for v in IMVariant}

    t0 = time.time()
    table = run_experiment(experiment_config(cfg), models,
                           lambda c: print(f"  {c.label:32s} {time.time() - t0:7.1f}s", file=sys.stderr),
                           workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    export_metrics(table, out / "metrics.tsv")
    (out / "runs.tsv").write_text(records_to_text(table.records))
    print(metrics_to_text(table), end="")
    print(f"grid took {time.time() - t0:.1f}s", file=sys.stderr)


if __name__ == "__main__":
    main()
