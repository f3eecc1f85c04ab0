#!/usr/bin/env python3
"""Generate a corpus of artefact-free synthetic face images with landmarks.

The output directory holds face####.png files and a landmarks.csv that the
`facecomp-qc synth` command consumes directly.
"""

import argparse

from facecomp_qc import facegen


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--count", type=int, default=200)
    parser.add_argument("--out", required=True)
    parser.add_argument("--seed", type=int, default=100)
    parser.add_argument("--size", type=int, default=640, help="source image side length")
    args = parser.parse_args()
    csv_path = facegen.generate_corpus(args.count, args.out, seed=args.seed,
                                       size=args.size)
    print(f"wrote {args.count} sources, landmarks at {csv_path}")


if __name__ == "__main__":
    main()
