import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualstream.data import CLASS_NAMES, DatasetSplit, LabeledCorpus, load_corpus, split_80_10_10, stratified_kfold
from dualstream.errors import DataError
from dualstream.imageproc import write_png
from dualstream.sample import ImageSample

TABLE_TOTALS = [1492, 1452, 1492, 1584]


def _per_class(corpus, ids):
    return np.bincount([corpus.samples[i].label for i in ids], minlength=len(corpus.class_names)).tolist()


def _tree(root, names=CLASS_NAMES, per=2):
    for c, name in enumerate(names):
        for i in range(per):
            write_png(root / name / f"im{i}.png", np.full((4, 4), 10 * c + i, np.uint8))


# -- loading -----------------------------------------------------------------------


def test_load_corpus_counts_and_order(tmp_path):
    _tree(tmp_path)
    corpus = load_corpus(tmp_path)
    assert len(corpus) == 8 and corpus.counts == [2, 2, 2, 2]
    assert corpus.class_names == CLASS_NAMES
    assert corpus.ids == load_corpus(tmp_path).ids
    assert corpus.samples["Pituitary/im1.png"].label == 2


def test_load_corpus_case_insensitive_and_custom_names(tmp_path):
    _tree(tmp_path / "a", names=[n.lower() for n in CLASS_NAMES])
    assert load_corpus(tmp_path / "a").class_names == CLASS_NAMES
    _tree(tmp_path / "b", names=["zeta", "alpha"])
    assert load_corpus(tmp_path / "b").class_names == ("alpha", "zeta")


def test_load_corpus_errors(tmp_path):
    with pytest.raises(DataError):
        load_corpus(tmp_path)
    with pytest.raises(DataError):
        load_corpus(tmp_path / "missing")
    _tree(tmp_path, per=1)
    (tmp_path / "Normal" / "broken.png").write_bytes(b"junk")
    with pytest.raises(DataError):
        load_corpus(tmp_path)
    assert len(load_corpus(tmp_path, permissive=True)) == 4


def test_corpus_rejects_duplicates_and_bad_labels():
    corpus = LabeledCorpus(CLASS_NAMES)
    corpus.add(ImageSample("a", 0))
    with pytest.raises(DataError):
        corpus.add(ImageSample("a", 1))
    with pytest.raises(DataError):
        corpus.add(ImageSample("b", 4))


# -- 80/10/10 -----------------------------------------------------------------------


def test_split_reproduces_reference_split():
    corpus = LabeledCorpus.from_counts(TABLE_TOTALS)
    split = split_80_10_10(corpus, seed=0)
    assert _per_class(corpus, split["train"]) == [1193, 1161, 1193, 1267]
    assert _per_class(corpus, split["validation"]) == [149, 145, 149, 158]
    assert _per_class(corpus, split["test"]) == [150, 146, 150, 159]


@pytest.mark.parametrize("n,expected", [(10, [8, 1, 1]), (5, [4, 0, 1]), (3, [2, 0, 1])])
def test_split_floor_rule(n, expected):
    corpus = LabeledCorpus.from_counts([n])
    split = split_80_10_10(corpus)
    assert [len(split[p]) for p in ("train", "validation", "test")] == expected


def test_split_needs_three_per_class():
    with pytest.raises(DataError):
        split_80_10_10(LabeledCorpus.from_counts([2, 5]))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(3, 60), min_size=1, max_size=5), st.integers(0, 1000))
def test_split_is_a_deterministic_partition(counts, seed):
    corpus = LabeledCorpus.from_counts(counts, [f"c{i}" for i in range(len(counts))])
    a, b = split_80_10_10(corpus, seed), split_80_10_10(corpus, seed)
    assert a.partitions == b.partitions
    parts = [set(a[p]) for p in ("train", "validation", "test")]
    assert sum(map(len, parts)) == len(corpus) and set().union(*parts) == set(corpus.ids)


def test_split_depends_on_seed():
    corpus = LabeledCorpus.from_counts([50, 50])
    assert split_80_10_10(corpus, 0)["test"] != split_80_10_10(corpus, 1)["test"]


def test_group_by_source_keeps_siblings_together():
    samples = []
    for c in range(2):
        for i in range(10):
            sid = f"c{c}/s{i}"
            samples.append(ImageSample(sid, c))
            samples += [ImageSample(f"{sid}#aug{k}", c, source=sid) for k in range(3)]
    corpus = LabeledCorpus.from_samples(samples, ("a", "b"))
    split = split_80_10_10(corpus, 0, group_by_source=True)
    where = {}
    for name, ids in split.partitions.items():
        for sid in ids:
            where.setdefault(corpus.samples[sid].source, set()).add(name)
    assert all(len(v) == 1 for v in where.values())
    assert split.strategy == "80-10-10/by-source"


def test_split_manifest_roundtrip(tmp_path):
    split = split_80_10_10(LabeledCorpus.from_counts([10, 10]), 3)
    split.save(tmp_path / "s.json", {"config_hash": "abc"})
    back = DatasetSplit.load(tmp_path / "s.json")
    assert back == split
    (tmp_path / "bad.json").write_text("{}")
    with pytest.raises(DataError):
        DatasetSplit.load(tmp_path / "bad.json")


# -- k-fold --------------------------------------------------------------------------


def test_kfold_exact_divisibility():
    corpus = LabeledCorpus.from_counts([5, 5, 5, 5])
    for split in stratified_kfold(corpus, 5, 0):
        assert _per_class(corpus, split["test"]) == [1, 1, 1, 1]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(5, 40), min_size=2, max_size=4), st.integers(2, 5), st.integers(0, 99))
def test_kfold_partition_properties(counts, k, seed):
    corpus = LabeledCorpus.from_counts(counts, [f"c{i}" for i in range(len(counts))])
    splits = stratified_kfold(corpus, k, seed)
    tests = [set(s["test"]) for s in splits]
    assert sum(map(len, tests)) == len(corpus) and set().union(*tests) == set(corpus.ids)
    for s in splits:
        assert set(s["train"]).isdisjoint(s["test"])
        assert len(s["train"]) + len(s["test"]) == len(corpus)
    per = np.array([_per_class(corpus, s["test"]) for s in splits])
    assert (per.max(axis=0) - per.min(axis=0)).max() <= 1
    sizes = [len(t) for t in tests]
    assert max(sizes) - min(sizes) <= 1


def test_kfold_errors():
    with pytest.raises(DataError):
        stratified_kfold(LabeledCorpus.from_counts([5, 5]), 1)
    with pytest.raises(DataError):
        stratified_kfold(LabeledCorpus.from_counts([5, 3]), 4)
