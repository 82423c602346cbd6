"""Build the bundled MNIST 2-vs-5 IDX fixture.

Source: the 5000-image MNIST sample shipped inside the mlxtend wheel
(mlxtend/data/data/mnist_5k.csv.gz, 500 images per digit, rows sorted by
digit, label in the last column). Twos and fives are interleaved so that a
prefix of any length is class-balanced.

usage: python3 scripts/make_mnist_fixture.py path/to/mlxtend-*.whl data/mnist-2v5
"""
import gzip
import struct
import sys
import zipfile
from pathlib import Path


def main() -> None:
    wheel, out = Path(sys.argv[1]), Path(sys.argv[2])
    raw = zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz")
    rows = [list(map(int, line.split(","))) for line in gzip.decompress(raw).decode().split()]
    twos = [r for r in rows if r[-1] == 2]
    fives = [r for r in rows if r[-1] == 5]
    ordered = [r for pair in zip(twos, fives) for r in pair]

    out.mkdir(parents=True, exist_ok=True)
    with open(out / "train-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(ordered), 28, 28))
        for r in ordered:
            f.write(bytes(r[:-1]))
    with open(out / "train-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(ordered)))
        f.write(bytes(r[-1] for r in ordered))


if __name__ == "__main__":
    main()
