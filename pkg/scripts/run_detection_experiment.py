"""End-to-end detection on a synthetic airport.

    python scripts/run_detection_experiment.py --out runs/detection
"""
import argparse
import json
import logging
from pathlib import Path

from trackae.autoencoder import save_checkpoint
from trackae.experiments import run_detection

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--out", type=Path, default=Path("runs/detection"))
parser.add_argument("--seed", type=int, default=0)
parser.add_argument("--n-train", type=int, default=2000)
parser.add_argument("--n-heldout", type=int, default=200)
parser.add_argument("--per-type", type=int, default=20)
parser.add_argument("--epochs", type=int, default=50)
args = parser.parse_args()
logging.basicConfig(level=logging.INFO, format="%(message)s")

res = run_detection(args.n_train, args.n_heldout, args.per_type, args.epochs, seed=args.seed,
                    log=logging.getLogger("train").info)
args.out.mkdir(parents=True, exist_ok=True)
save_checkpoint(res.model, args.out / "model.ckpt", threshold=res.delta)
(args.out / "train_report.csv").write_text(res.train_report.to_csv())
summary = {
    "delta": res.delta, "recall": res.recall, "false_positive_rate": res.false_positive_rate,
    "runtime_s": round(res.runtime_s, 1), "n_train": res.n_train, "n_heldout": res.n_heldout,
    "per_type": {k: {"recall": r, "autoencoder_only": ae} for k, (r, ae) in res.per_type.items()},
}
(args.out / "detection.json").write_text(json.dumps(summary, indent=2) + "\n")
print(json.dumps(summary, indent=2))
