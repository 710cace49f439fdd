"""
Training on weak labels and looking at the attention
====================================================

Only the recipe and the set of actions are used for training. Afterwards we
ask where in time each action's attention lands, and compare that with a
uniform map (the attention score's chance level).
"""

from pathlib import Path

import numpy as np

from vidattn import plots
from vidattn.data import SynthConfig, split, synth_generate
from vidattn.metrics import attention_score, evaluate, uniform_attention_score
from vidattn.net import ModelDims, forward
from vidattn.optim import TrainConfig, train

out_dir = Path(__file__).with_name("out")
out_dir.mkdir(exist_ok=True)

ds = synth_generate(SynthConfig(num_recipes=4, num_actions=7, feat_dim=16,
                                videos_per_recipe=15, noise_std=0.05, seed=0))
tr, va, te = split(ds, 2 / 3, seed=0)


def progress(rec, params):
    if rec.epoch % 50 == 0:
        print(f"epoch {rec.epoch:4d}  train loss {rec.train_loss:.4f}  "
              f"val acc {rec.val['recipe_accuracy']:.2f}  val loss {rec.val['loss']:.4f}")


best, history = train(tr, va, ModelDims(16, 64, 7, 4), TrainConfig(epochs=300), callback=progress)
print(f"best checkpoint: epoch {best.epoch}")

report = evaluate(best, te)
print("\ntest split")
print(report.csv_header())
print(report.csv_row())
print(f"attention vs uniform: {report.mean_attention_score:.4f} vs {report.mean_uniform_attention_score:.4f}")

# one test video, its attention rows for the annotated actions
v = te.videos[0]
acts = v.annotated_actions()
P = forward(v, best.params, "eval").attention[acts]
print(f"\n{v.id}: score {attention_score(P, v.frame_labels, acts):.4f}, "
      f"uniform {uniform_attention_score(v.frame_labels, acts):.4f}")
for a, row in zip(acts, P):
    peak = int(np.argmax(row))
    print(f"action {a}: peak at frame {peak} (true label there: {v.frame_labels[peak]})")

plots.attention_svg(P, acts, v.frame_labels, out_dir / "attention.svg", title=v.id)
plots.curves_svg({"train_loss": best.history_series("train", "loss"),
                  "val_loss": best.history_series("val", "loss")}, out_dir / "loss.svg", "loss")
print(f"\nwrote {out_dir / 'attention.svg'} and {out_dir / 'loss.svg'}")
