"""Train the dual-branch model and its single-branch ablation on the synthetic corpus.

500 steps each on 128 images of 32 px; expect a few minutes on
one core. Prints the accuracy table for both rows.

Run: python demos/train_and_compare.py
"""
import tempfile

from nasaswin.data import load_manifest, preprocess_manifest, synth
from nasaswin.evaluate import evaluate_arrays, format_table
from nasaswin.model import ModelConfig, NasaSwin
from nasaswin.train import TrainConfig, train_arrays

tmp = tempfile.mkdtemp(prefix="nasaswin_demo_")
paths = synth(tmp, 128, seed=0, size=32)
tr, te = load_manifest(paths["train"]), load_manifest(paths["test"])
x_tr, x_te = preprocess_manifest(tr, 32), preprocess_manifest(te, 32)
sources = [e.source for e in te.entries]

rows = {}
for label, span in (("NASA-Swin", (2, 3)), ("Swin only", None)):
    model = NasaSwin(ModelConfig(nasa_span=span), seed=0)
    result = train_arrays(model, x_tr, tr.labels, TrainConfig(lr=0.003, max_steps=500, cms_enabled=False))
    print(f"{label}: loss {result.losses[0]:.3f} -> {result.losses[-1]:.3f}")
    rows[label] = evaluate_arrays(model, x_te, te.labels, sources)

print()
print(format_table(rows))
