#!/usr/bin/env python3
"""Rebuild the bundled digit datasets under data/.

MNIST: the `mnist` npm package ships ~10k real MNIST digits as per-class JSON
arrays (values rounded to 3 decimals). They are re-quantized to bytes and
written as gzipped IDX files using the standard file names, split 80/20 per
class into train / t10k.

optdigits: scikit-learn bundles the UCI optdigits test partition
(8x8 counts in 0..16). It is written back out in the UCI `optdigits.tes`
comma-separated layout.

Full-size datasets (MNIST 60k, USPS, SVHN, CIFAR-10) can be dropped into
their own directories under the data root in their standard layouts.
"""
import gzip, io, json, os, random, struct, subprocess, sys, tarfile, tempfile, urllib.request

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data")
NPM_URL = "https://registry.npmjs.org/mnist/-/mnist-1.1.0.tgz"


def write_idx(path, dims, payload, code=0x08):
    header = struct.pack(">BBBB", 0, 0, code, len(dims)) + b"".join(struct.pack(">I", d) for d in dims)
    with open(path, "wb") as raw:
        # mtime=0 keeps the archive bytes reproducible
        with gzip.GzipFile(fileobj=raw, mode="wb", mtime=0, filename="") as f:
            f.write(header + bytes(payload))


def build_mnist(tgz):
    out = os.path.join(ROOT, "mnist")
    os.makedirs(out, exist_ok=True)
    train, test = [], []
    with tarfile.open(tgz) as tar:
        for digit in range(10):
            data = json.load(tar.extractfile(f"package/src/digits/{digit}.json"))["data"]
            n = len(data) // 784
            imgs = [bytes(min(255, round(v * 255)) for v in data[i * 784:(i + 1) * 784]) for i in range(n)]
            cut = (n * 4) // 5
            train += [(img, digit) for img in imgs[:cut]]
            test += [(img, digit) for img in imgs[cut:]]
    rng = random.Random(0)
    for name, rows in (("train", train), ("t10k", test)):
        rng.shuffle(rows)
        write_idx(os.path.join(out, f"{name}-images-idx3-ubyte.gz"), [len(rows), 28, 28], b"".join(r[0] for r in rows))
        write_idx(os.path.join(out, f"{name}-labels-idx1-ubyte.gz"), [len(rows)], bytes(r[1] for r in rows))
        print(name, len(rows))


def build_optdigits():
    from sklearn.datasets import load_digits
    d = load_digits()
    out = os.path.join(ROOT, "optdigits")
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "optdigits.tes"), "w") as f:
        for row, label in zip(d.data.astype(int), d.target):
            f.write(",".join(str(v) for v in row) + f",{label}\n")
    print("optdigits", len(d.target))


if __name__ == "__main__":
    with tempfile.TemporaryDirectory() as tmp:
        tgz = sys.argv[1] if len(sys.argv) > 1 else os.path.join(tmp, "mnist.tgz")
        if not os.path.exists(tgz):
            urllib.request.urlretrieve(NPM_URL, tgz)
        build_mnist(tgz)
    build_optdigits()
