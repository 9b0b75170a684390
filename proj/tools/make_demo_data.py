#!/usr/bin/env python3
"""Regenerates the offline demo dataset under data/demo.

Images are tiny solid-colour PNGs; the scripted chat backend answers by
image digest, so the demo runs need no network and no real model.
"""
import hashlib
import pathlib
import struct
import zlib

ROOT = pathlib.Path(__file__).resolve().parent.parent / "data" / "demo"

CLASSES = [
    "laptop computer", "notebook computer", "sunglass", "sunglasses", "printer", "photocopier",
    "lakeshore", "seashore", "maillot", "bathing suit", "bookstore", "library",
    "missile", "projectile", "breastplate", "cuirass", "bathtub", "tub",
    "Eskimo dog", "Siberian husky", "cassette player", "tape player", "water jug", "drink pitcher",
    "tabby cat", "tiger cat", "golden retriever", "banana", "computer mouse", "computer keyboard",
    "desk", "coffee mug",
]
ALT_NAMES = {"tub": ["vat"], "maillot": ["tights", "leotard"], "computer mouse": ["mouse"]}
PAIRS = [(0, 1), (2, 3), (4, 5), (6, 7), (8, 9), (10, 11),
         (12, 13), (14, 15), (16, 17), (18, 19), (20, 21), (22, 23)]

# image id, ImGT class, ReGT labels, scripted CW answer
IMAGES = [
    ("img001", 0, [0], "laptop computer"),
    ("img002", 1, [0], "notebook computer"),
    ("img003", 24, [24], "tabby cat"),
    ("img004", 25, [24], "tabby cat"),
    ("img005", 26, [26], "golden retriever"),
    ("img006", 27, [27], "banana"),
    ("img007", 28, [28, 29, 30], "computer keyboard"),
    ("img008", 29, [28, 29], "laptop"),
    ("img009", 30, [0, 31], "desk"),
    ("img010", 31, [31], "coffee cup"),
    ("img011", 6, [7], "seashore"),
    ("img012", 12, [12], "rocket"),
    ("img013", 18, [19], "Siberian husky"),
    ("img014", 20, [20], "tape player"),
    ("img015", 22, [], "water jug"),
    ("img016", 16, [16], "bathtub"),
    ("img017", 14, [], "I don't know"),
    ("img018", 2, [3], "sunglasses"),
    ("img019", 4, [4, 30], "printer"),
    ("img020", 10, [11], "library"),
    ("img021", 26, [26], "xqzzv blorp"),
    ("img022", 8, [9], "swimsuit"),
    ("img023", 25, [25], "tiger cat"),
    ("img024", 27, [27, 31], "coffee mug"),
]


def png(rgb):
    def chunk(kind, data):
        body = kind + data
        return struct.pack(">I", len(data)) + body + struct.pack(">I", zlib.crc32(body) & 0xFFFFFFFF)

    w = h = 8
    raw = b"".join(b"\x00" + bytes(rgb) * w for _ in range(h))
    return (b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0))
            + chunk(b"IDAT", zlib.compress(raw, 9)) + chunk(b"IEND", b""))


def main():
    (ROOT / "images").mkdir(parents=True, exist_ok=True)
    with open(ROOT / "catalog.tsv", "w") as f:
        f.write("# id\tcanonical name\talternative names (|-separated)\n")
        for i, name in enumerate(CLASSES):
            f.write(f"{i}\t{name}\t{'|'.join(ALT_NAMES.get(name, []))}\n")
        f.write("#EQUIV\n")
        for a, b in PAIRS:
            f.write(f"{a}\t{b}\n")
    imgt, regt, manifest, answers = [], [], [], []
    for n, (img, gt, labels, answer) in enumerate(IMAGES):
        data = png(((37 * n) % 256, (91 * n + 40) % 256, (53 * n + 90) % 256))
        (ROOT / "images" / f"{img}.png").write_bytes(data)
        imgt.append(f"{img}\t{gt}\n")
        regt.append(f"{img}\t{','.join(str(c) for c in labels)}\n")
        manifest.append(f"{img}\timages/{img}.png\n")
        answers.append(f"{hashlib.sha256(data).hexdigest()}\t{answer}\n")
    (ROOT / "imgt.tsv").write_text("".join(imgt))
    (ROOT / "regt.tsv").write_text("".join(regt))
    (ROOT / "manifest.tsv").write_text("".join(manifest))
    (ROOT / "answers.tsv").write_text("# image sha256\tscripted answer\n" + "".join(answers))

    # Sparse confusion counts: each class is confused with its neighbours.
    lines = [f"{len(CLASSES)}\n"]
    for c in range(len(CLASSES)):
        for d, count in ((1, 9), (2, 5), (5, 2)):
            lines.append(f"{c}\t{(c + d) % len(CLASSES)}\t{count}\n")
    (ROOT / "confusion.tsv").write_text("".join(lines))


if __name__ == "__main__":
    main()
