#!/usr/bin/env python3
"""Regenerate the bundled planted corpus under data/.

Three classes with disjoint findings vocabularies. Train cases cover each
vocabulary; 20 of the 60 test images carry a planted label that differs from
their gold label, so the mock classifier ranks the wrong class first.
"""
import json
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "data"
SEED = 20240611

VOCAB = {
    "psoriasis": [
        "silvery-scale", "well-demarcated-plaque", "auspitz-sign", "extensor-distribution",
        "salmon-pink-base", "nail-pitting", "koebner-linear", "micaceous-crust",
    ],
    "eczema": [
        "ill-defined-patch", "lichenified-skin", "flexural-distribution", "serous-exudate",
        "excoriation-marks", "fine-papulovesicles", "xerotic-surface", "hyperpigmented-thickening",
    ],
    "tinea": [
        "annular-ring", "active-scaly-border", "central-clearing", "peripheral-papules",
        "asymmetric-spread", "ringworm-pattern", "kerion-swelling", "satellite-pustules",
    ],
}
LABELS = list(VOCAB)
WRONG_PER_CLASS = {"psoriasis": 7, "eczema": 7, "tinea": 6}

HANDBOOK = {
    "psoriasis": (
        "Psoriasis\n\n"
        "A chronic immune mediated disorder. Lesions are sharply bordered, raised and covered by "
        "layered white scale that bleeds in pinpoints when scraped. Elbows, knees and scalp are "
        "typical sites. Nails may show small depressions and lifting.\n\n"
        "New lesions can appear along lines of trauma. Joint pain suggests associated arthritis."
    ),
    "eczema": (
        "Eczema\n\n"
        "An itchy inflammatory dermatitis with poorly bordered redness. Acute disease oozes and "
        "crusts; chronic disease thickens with accentuated skin markings from rubbing. Skin "
        "folds such as the elbow and knee creases are favored in older children and adults.\n\n"
        "Personal or family history of asthma or hay fever is common. Scratch marks are frequent."
    ),
    "tinea": (
        "Tinea corporis\n\n"
        "A superficial fungal infection. The classic lesion is a ring with a raised scaly edge "
        "that advances outward while the center fades. Lesions are often single or few and "
        "asymmetric.\n\n"
        "Scraping of the edge for microscopy with potassium hydroxide confirms hyphae. Deep "
        "inflammatory forms may develop boggy pustular masses."
    ),
}


def ppm(rng, size=8):
    pixels = bytes(rng.randrange(256) for _ in range(size * size * 3))
    return b"P6\n%d %d\n255\n" % (size, size) + pixels


def write_image(path, rng, meta):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(ppm(rng))
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def findings_text(terms):
    return ", ".join(terms) + "."


def main():
    rng = random.Random(SEED)
    corpus = ROOT / "corpus"

    memory_rows = ["case_id,image_path,key_findings,diagnosis"]
    train_rows = ["sample_id,image_path,label"]
    for label in LABELS:
        vocab = VOCAB[label]
        for j in range(10):
            terms = [vocab[j % 8], vocab[(j + 1) % 8], vocab[(j + 3) % 8]]
            sid = f"train-{label}-{j:02d}"
            rel = f"train/{sid}.ppm"
            write_image(corpus / rel, rng,
                        {"planted_label": label, "findings_terms": terms, "gold_label": label})
            memory_rows.append(f'{sid},{rel},"{findings_text(terms)}",{label}')
            train_rows.append(f"{sid},{rel},{label}")

    test_rows = ["sample_id,image_path,label"]
    designated = ["sample_id,gold_label,planted_label"]
    for ci, label in enumerate(LABELS):
        vocab = VOCAB[label]
        wrong = set(rng.sample(range(20), WRONG_PER_CLASS[label]))
        for j in range(20):
            terms = sorted(rng.sample(vocab, rng.randint(2, 4)), key=vocab.index)
            planted = label
            if j in wrong:
                planted = LABELS[(ci + 1 + rng.randrange(2)) % 3]
            sid = f"test-{label}-{j:02d}"
            rel = f"test/{sid}.ppm"
            write_image(corpus / rel, rng,
                        {"planted_label": planted, "findings_terms": terms, "gold_label": label})
            test_rows.append(f"{sid},{rel},{label}")
            if planted != label:
                designated.append(f"{sid},{label},{planted}")

    (corpus / "memory_seed.csv").write_text("\n".join(memory_rows) + "\n")
    (corpus / "train.csv").write_text("\n".join(train_rows) + "\n")
    (corpus / "test.csv").write_text("\n".join(test_rows) + "\n")
    (corpus / "designated.csv").write_text("\n".join(designated) + "\n")

    handbook = ROOT / "handbook"
    handbook.mkdir(parents=True, exist_ok=True)
    for label, text in HANDBOOK.items():
        (handbook / f"{label}.md").write_text(text + "\n")

    (corpus / "evoderm.toml").write_text(
        "# Mock-backend configuration for the bundled corpus.\n"
        "[memory]\n"
        'dir = "../../evoderm-data/memory"\n\n'
        "[kb]\n"
        'path = "../../evoderm-data/kb.json"\n'
        'handbook_dir = "../handbook"\n\n'
        "[evolution]\n"
        "n_thresh = 10\n\n"
        "[pipeline]\n"
        'labels = ["psoriasis", "eczema", "tinea"]\n'
    )


if __name__ == "__main__":
    main()
