"""Perturbation-radius and sample-count ablations for adversarially trained logistic regression."""

from _common import parser, run

if __name__ == "__main__":
    ap = parser(__doc__, 50)
    ap.add_argument("--which", choices=["r", "n", "both"], default="both")
    args = ap.parse_args()
    if args.which in ("r", "both"):
        s = run("ablate_r", args, args.out_dir).summary
        print(f"best r {s['best_r']}  interior {s['best_is_interior']}  unimodal {s['unimodal']}")
    if args.which in ("n", "both"):
        s = run("ablate_n", args, args.out_dir).summary
        print(f"Spearman(gap, n) on seed means {s['spearman']:.3f}")
