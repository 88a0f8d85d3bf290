"""Regenerates the test fixtures under fixtures/.

Arrays are written with numpy itself so the Rust reader is checked against an
independent serializer. Golden values are computed with plain Python loops over
the stored values (no shared code with the Rust implementation).
"""
import json
import math
import os

import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))


def write_npy_variants():
    out = os.path.join(HERE, "npy")
    os.makedirs(out, exist_ok=True)
    a = np.array([[1, 2, 3], [4, 5, 6]], dtype="<f4")
    np.save(os.path.join(out, "valid_f4_2x3.npy"), a)
    np.save(os.path.join(out, "valid_f8_2x3.npy"), a.astype("<f8"))
    with open(os.path.join(out, "valid_f4_2x3.npy"), "rb") as f:
        raw = f.read()
    with open(os.path.join(out, "bad_magic.npy"), "wb") as f:
        f.write(b"\x92" + raw[1:])
    with open(os.path.join(out, "truncated.npy"), "wb") as f:
        f.write(raw[:-5])
    np.save(os.path.join(out, "fortran_order.npy"), np.asfortranarray(a))
    np.save(os.path.join(out, "big_endian.npy"), a.astype(">f4"))
    np.save(os.path.join(out, "int32.npy"), a.astype("<i4"))
    np.save(os.path.join(out, "empty_rows.npy"), np.zeros((0, 2048), dtype="<f4"))
    np.save(os.path.join(out, "three_d.npy"), np.zeros((2, 3, 1), dtype="<f8"))


def cosine_distance(a, b):
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(y * y for y in b))
    return 1.0 - dot / (na * nb)


def components(rows, eps):
    n = len(rows)
    seen = [False] * n
    count = 0
    for s in range(n):
        if seen[s]:
            continue
        count += 1
        stack = [s]
        seen[s] = True
        while stack:
            i = stack.pop()
            for j in range(n):
                if not seen[j] and cosine_distance(rows[i], rows[j]) <= eps:
                    seen[j] = True
                    stack.append(j)
    return count


def write_synth4():
    rng = np.random.default_rng(20221015)
    root = os.path.join(HERE, "synth4")
    os.makedirs(root, exist_ok=True)
    dim = 16
    base = np.abs(rng.normal(1.0, 0.6, size=dim))
    specs = [
        ("alpha", 12, "<f4", 0.35),
        ("beta", 9, "<f8", 0.45),
        ("gamma", 15, "<f4", 0.30),
        ("delta", 7, "<f8", 0.60),
    ]
    classes = []
    loaded = {}
    for idx, (name, n, dtype, spread) in enumerate(specs):
        proto = np.abs(base + rng.normal(0.0, spread, size=dim))
        rows = []
        while len(rows) < n:
            centre = np.abs(proto + rng.normal(0.0, 0.5, size=dim))
            # near-duplicate bursts around a few centres
            for _ in range(rng.integers(1, 4)):
                if len(rows) < n:
                    rows.append(np.abs(centre + rng.normal(0.0, 0.04, size=dim)))
        arr = np.array(rows).astype(dtype)
        fname = f"{idx:02d}_{name}.npy"
        np.save(os.path.join(root, fname), arr)
        entry = {"name": name, "file": fname}
        if name != "delta":
            entry["sample_ids"] = [f"{name}_{i:03d}.jpg" for i in range(n)]
        classes.append(entry)
        loaded[name] = np.load(os.path.join(root, fname)).astype(np.float64).tolist()

    manifest = {"dimension": dim, "classes": classes, "meta": {"generator": "fixtures/generate.py"}}
    with open(os.path.join(root, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")

    names = [c["name"] for c in classes]
    centroids = []
    for name in names:
        rows = loaded[name]
        centroids.append([sum(r[k] for r in rows) / len(rows) for k in range(dim)])
    matrix = [[0.0 if i == j else cosine_distance(centroids[i], centroids[j]) for j in range(len(names))]
              for i in range(len(names))]

    eps = 0.05
    margin = min(abs(cosine_distance(a, b) - eps) for name in names
                 for i, a in enumerate(loaded[name]) for b in loaded[name][i + 1:])
    assert margin > 1e-6, margin
    vcr = {name: {"samples": len(loaded[name]), "clusters": components(loaded[name], eps)} for name in names}
    golden = {"classes": names, "distances": matrix, "eps": eps, "vcr": vcr}
    with open(os.path.join(HERE, "synth4_golden.json"), "w") as f:
        json.dump(golden, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    write_npy_variants()
    write_synth4()
