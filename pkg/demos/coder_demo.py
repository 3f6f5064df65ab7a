"""How close the range coder gets to the entropy, and what the learned sign model buys.

    python3 demos/coder_demo.py
"""

import numpy as np

from divc import coder


def main():
    rng = np.random.default_rng(0)
    n = 10_000
    print("iid binary sources, 10^4 symbols")
    print(f"{'p(1)':>6} {'entropy':>9} {'coded':>7} {'overhead':>9}")
    for p in (0.5, 0.2, 0.05, 0.01):
        bits = rng.random(n) < p
        q = bits.mean()
        h = -n * (q * np.log2(q) + (1 - q) * np.log2(1 - q))
        coded = 8 * len(coder.encode_bits(bits, np.full(n, q)))
        print(f"{p:6.2f} {h:9.1f} {coded:7d} {coded - h:9.1f}")

    # signs next to a surface are predictable from their neighbours; a context
    # model exploits that, a single Bernoulli rate cannot
    x = np.linspace(-1, 1, 64)
    field = x[:, None] ** 2 + x[None, :] ** 2 - 0.5
    signs = (field >= 0).reshape(-1)
    p = signs.mean()
    flat = 8 * len(coder.encode_bits(signs, np.full(signs.size, p)))
    # context: probability of a positive sign given the sign of the left neighbour
    left = np.roll(field >= 0, 1, axis=1).reshape(-1)
    p_same = np.mean(signs == left)
    probs = np.where(left, p_same, 1 - p_same)
    ctx = 8 * len(coder.encode_bits(signs, probs))
    print(f"\n64x64 disc: Bernoulli {flat} bits, left-neighbour context {ctx} bits")


if __name__ == "__main__":
    main()
