"""Excess robust risk of minimax SGD versus T on a strongly-convex-concave quadratic."""

from _common import parser, run

if __name__ == "__main__":
    args = parser(__doc__, 200).parse_args()
    s = run("converge", args, args.out_dir).summary
    for T, m, e in zip(s["T"], s["mean_excess"], s["envelope"]):
        print(f"T={int(T):5d}  mean excess {m:.3e}  envelope {e:.3e}")
    print(f"log-log slope {s['slope']:.3f}")
