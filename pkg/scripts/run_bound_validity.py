"""Empirical violation rate of the W_inf out-of-distribution bound under adversarial shifts."""

from _common import parser, run

if __name__ == "__main__":
    args = parser(__doc__, 200).parse_args()
    s = run("bound_validity", args, args.out_dir).summary
    print(f"violation rate {s['violation_rate']:.3f}  allowed {s['allowed_rate']:.3f}  ok {s['ok']}")
