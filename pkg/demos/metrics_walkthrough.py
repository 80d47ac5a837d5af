"""Score a published-style confusion matrix end to end.

Rebuilds the 605 (predicted, actual) pairs behind a 4-class confusion
matrix, then reports the scalar metrics, Cohen's kappa and a bootstrap
interval for accuracy.  Run: python demos/metrics_walkthrough.py
"""
import numpy as np

from dualstream.metrics import ConfusionMatrix, bootstrap_ci, classification_metrics, cohens_kappa

CLASSES = ("Glioma", "Meningioma", "Normal", "Pituitary")
# rows are actual classes, columns predicted
COUNTS = np.array([
    [143, 7, 0, 0],
    [0, 146, 0, 0],
    [0, 0, 159, 0],
    [2, 1, 0, 147],
])


def pairs(counts):
    actual = np.repeat(np.arange(4), counts.sum(axis=1))
    predicted = np.concatenate([np.repeat(np.arange(4), row) for row in counts])
    return predicted, actual


def main():
    cm = ConfusionMatrix(COUNTS, CLASSES)
    m = classification_metrics(cm)
    print(f"accuracy           {m.accuracy:.5f}")
    for avg in ("weighted", "macro"):
        print(f"{avg:<8} P/R/F1     " + " ".join(f"{getattr(m, avg)[k]:.4f}" for k in ("precision", "recall", "f1")))
    print(f"Cohen's kappa      {cohens_kappa(cm):.4f}")

    predicted, actual = pairs(COUNTS)
    ci = bootstrap_ci(predicted, actual, B=1000, seed=0)
    p = m.accuracy
    half = 1.96 * np.sqrt(p * (1 - p) / len(actual))
    print(f"bootstrap 95% CI   ({ci.lower:.4f}, {ci.upper:.4f})")
    print(f"normal approx.     ({p - half:.4f}, {p + half:.4f})")


if __name__ == "__main__":
    main()
