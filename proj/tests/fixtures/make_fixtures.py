"""Regenerates the binary fixtures in this directory. Run from anywhere."""
import json
import math
import pathlib
import random
import struct

HERE = pathlib.Path(__file__).resolve().parent


def write_iclt(path, shape, values, dtype=1):
    fmt = {1: "<f", 3: "<B"}[dtype]
    with open(path, "wb") as f:
        f.write(b"ICLT" + bytes([1, dtype, len(shape), 0]))
        for e in shape:
            f.write(struct.pack("<Q", e))
        for v in values:
            f.write(struct.pack(fmt, v))


def causal_uniform(n):
    return [1.0 / (j + 1) if i <= j else 0.0 for j in range(n) for i in range(n)]


def causal_bos(n):
    return [1.0 if i == 0 else 0.0 for j in range(n) for i in range(n)]


def dump(path, doc):
    path.write_text(json.dumps(doc, indent=2) + "\n")


SEG6 = [
    {"index": 0, "role": "BOS", "ice_index": None},
    {"index": 1, "role": "IMAGE_MARK", "ice_index": 0},
    {"index": 2, "role": "CONTEXT_TEXT", "ice_index": 0},
    {"index": 3, "role": "DELIM", "ice_index": 0},
    {"index": 4, "role": "QUERY", "ice_index": None},
    {"index": 5, "role": "QUERY", "ice_index": None},
]

MODEL = {"name": "fixture", "n_layers": 2, "n_heads": 1, "head_dim": 4, "kv_bytes_per_element": 2}


def run_dirs():
    basic = HERE / "run_basic"
    basic.mkdir(exist_ok=True)
    dump(basic / "seg.json", SEG6)
    write_iclt(basic / "attn.iclt", [2, 1, 6, 6], causal_uniform(6) + causal_bos(6))
    dump(basic / "manifest.json", {
        "version": 1, "model": MODEL,
        "samples": [{"id": "s0", "segmentation": "seg.json", "attention": {"with_query_image": "attn.iclt"},
                     "caption": "a cat."}],
        "files": {},
    })

    mismatch = HERE / "run_mismatch"
    mismatch.mkdir(exist_ok=True)
    dump(mismatch / "seg.json", [SEG6[0], SEG6[1], SEG6[2], SEG6[4], SEG6[5]])
    write_iclt(mismatch / "attn.iclt", [2, 1, 6, 6], causal_uniform(6) + causal_uniform(6))
    dump(mismatch / "manifest.json", {
        "version": 1, "model": MODEL,
        "samples": [{"id": "s0", "segmentation": "seg.json", "attention": {"with_query_image": "attn.iclt"}}],
        "files": {},
    })
    # Index fields must match positions, so renumber.
    seg = json.loads((mismatch / "seg.json").read_text())
    for i, t in enumerate(seg):
        t["index"] = i
    dump(mismatch / "seg.json", seg)

    empty = HERE / "run_empty"
    empty.mkdir(exist_ok=True)
    dump(empty / "manifest.json", {"version": 1, "model": MODEL, "samples": [], "files": {}})


def caption_fixture():
    rng = random.Random(7)
    subjects = ["cat", "dog", "person", "bench", "car", "bird", "horse", "pizza", "clock", "boat"]
    images = []
    for i, s in enumerate(subjects):
        human = [
            f"A {s} sitting on a wooden table.",
            f"a small {s} next to a window",
            f"The {s} is resting in the sun.",
            f"a close up photo of a {s}.",
            f"An old {s} near the street..",
        ]
        machine = {
            "MGC_TF_60": f"a {s} on a table",
            "MGC_TF_80": f"a {s} sitting on a table",
            "MGC_TF_135": f"a {s} sitting on a wooden table",
            "MGC_LMM_0": f"a photo of a {s}",
            "MGC_LMM_32": f"a small {s} next to a window",
        }
        images.append({"id": f"img{i}", "human_captions": human, "machine_captions": machine,
                       "gt_objects": [s] if s != "bench" else ["bench", "person"]})
    dump(HERE / "coco10" / "captions.json", {"images": images})

    # Embeddings: random unit vectors, with img3 a near duplicate of img0.
    vecs = []
    for i in range(10):
        v = [rng.gauss(0, 1) for _ in range(8)]
        if i == 3:
            v = [a + 0.01 * rng.gauss(0, 1) for a in vecs[0]]
        n = math.sqrt(sum(a * a for a in v))
        vecs.append([a / n for a in v])
    write_iclt(HERE / "coco10" / "image_emb.iclt", [10, 8], [a for v in vecs for a in v])
    dump(HERE / "coco10" / "image_emb.ids.json", {"ids": [f"img{i}" for i in range(10)], "normalized": True})

    # Caption embeddings keyed by sample id (= query image id here).
    text = []
    for i in range(10):
        v = [a + 0.5 * rng.gauss(0, 1) for a in vecs[i]]
        n = math.sqrt(sum(a * a for a in v))
        text.append([a / n for a in v])
    write_iclt(HERE / "coco10" / "text_emb.iclt", [10, 8], [a for v in text for a in v])
    dump(HERE / "coco10" / "text_emb.ids.json", {"ids": [f"img{i}" for i in range(10)], "normalized": True})

    dump(HERE / "coco10" / "lexicon.json", {
        "categories": subjects + ["table"],
        "synonyms": {"kitten": "cat", "puppy": "dog", "man": "person", "woman": "person", "people": "person",
                     "dining table": "table"},
    })


if __name__ == "__main__":
    (HERE / "coco10").mkdir(exist_ok=True)
    run_dirs()
    caption_fixture()
