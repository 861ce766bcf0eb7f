"""Why a GAN transition model makes a robust curiosity signal.

Two single-tile toy processes:
  - a deterministic tape: next symbol is a function of (symbol, action);
  - a coin flip: one action yields either of two symbols with p = 1/2.

A prediction-error bonus stays attracted to the coin flip forever. The
GAN's curiosity (reconstruction error through the encoder latent, gated
by the discriminator) learns both outcomes are ordinary and keeps its
appetite for transitions that never happen.
"""

from csg import toy

# --------------------------------------------------------- tape accuracy
acc = toy.run_tape_training(train_steps=2000)
print(f"deterministic tape, held-out argmax accuracy: {acc:.3f}")

# ----------------------------------------------------------- coin probe
def progress(step, report, cur):
    print(f"  step {step:5d}  recon {report['recon_loss']:.3f}  "
          f"familiar {cur['familiar_mean']:.4f}  "
          f"impossible {cur['impossible']:.4f}")

print("coin-flip training:")
result = toy.run_coin_probe(train_steps=3000, progress=progress)
before, after = result["untrained"], result["trained"]
print(f"familiar-mean curiosity: {before['familiar_mean']:.4f} -> "
      f"{after['familiar_mean']:.4f}")
print(f"impossible-transition curiosity after training: "
      f"{after['impossible']:.4f}")
print("robust to stochastic transitions:", result["robust"])
