"""Fine-tune vs. from-scratch on a second synthetic airport.

Trains its own source model unless --source points at a checkpoint plus
--source-report (e.g. the output of run_detection_experiment.py).

    python scripts/run_transfer_experiment.py --out runs/transfer
"""
import argparse
import json
from pathlib import Path

from trackae.autoencoder import TrainReport, load_checkpoint
from trackae.experiments import run_transfer

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--out", type=Path, default=Path("runs/transfer"))
parser.add_argument("--seed", type=int, default=0)
parser.add_argument("--source", type=Path, help="source checkpoint")
parser.add_argument("--source-report", type=Path, help="epoch,loss CSV of the source run")
parser.add_argument("--budget", type=int, default=50)
parser.add_argument("--target-factor", type=float, default=1.5)
args = parser.parse_args()

model = report = None
if args.source:
    if not args.source_report:
        parser.error("--source needs --source-report")
    model, _ = load_checkpoint(args.source)
    report = TrainReport.from_csv(args.source_report.read_text())
res = run_transfer(args.out, budget_epochs=args.budget, target_factor=args.target_factor, seed=args.seed,
                   source_model=model, source_report=report)
(args.out / "transfer.csv").write_text(res.report.to_csv())
summary = {"source_final_loss": res.source_final_loss, "loss_target": res.report.loss_target,
           "epochs_to_target": res.report.epochs_to_target, "speedup_ratio": res.report.speedup_ratio}
(args.out / "transfer.json").write_text(json.dumps(summary, indent=2) + "\n")
print(json.dumps(summary, indent=2))
