"""Synthetic task generators: label correctness, determinism, file formats."""

import pytest

from precond_attn.errors import InputError
from precond_attn.tasks import (CLOSE, LISTOPS_CLASSES, LISTOPS_VOCAB, OP_MAX,
                                OP_MED, OP_MIN, TASKS, TaskInstance, dump_instances,
                                gen_copy, gen_listops_mini, gen_majority,
                                generate, listops_max_len, load_instances)

from oracles import eval_listops


class TestCopy:
    def test_label_repeats_tokens(self):
        for inst in gen_copy(seed=0, n=5, vocab=4, count=50):
            assert inst.label == inst.tokens
            assert len(inst.tokens) == 5
            assert all(0 <= t < 4 for t in inst.tokens)

    def test_deterministic(self):
        assert gen_copy(1, 4, 3, 10) == gen_copy(1, 4, 3, 10)
        assert gen_copy(1, 4, 3, 10) != gen_copy(2, 4, 3, 10)

    def test_rejects_short_sequences(self):
        with pytest.raises(InputError, match="n >= 2"):
            gen_copy(0, 1, 4, 1)

    def test_rejects_tiny_vocab(self):
        with pytest.raises(InputError, match="vocab >= 2"):
            gen_copy(0, 4, 1, 1)


class TestMajority:
    def test_labels_match_count_oracle(self):
        for inst in gen_majority(seed=3, n=9, vocab=4, count=200):
            counts = [inst.tokens.count(i) for i in range(4)]
            best = max(counts)
            # ties resolve to the smallest token id
            want = min(i for i in range(4) if counts[i] == best)
            assert inst.label == want

    def test_binary_majority_strict(self):
        # odd n and vocab 2: the label is the strictly more frequent token
        for inst in gen_majority(seed=4, n=7, vocab=2, count=100):
            ones = sum(inst.tokens)
            assert inst.label == (1 if ones > 3 else 0)

    def test_rejects_even_length(self):
        with pytest.raises(InputError, match="odd"):
            gen_majority(0, 8, 2, 1)

    def test_deterministic(self):
        assert gen_majority(9, 5, 2, 20) == gen_majority(9, 5, 2, 20)


class TestListops:
    def test_labels_match_recursive_oracle(self):
        for inst in gen_listops_mini(seed=5, depth=3, count=300):
            assert inst.label == eval_listops(list(inst.tokens))
            assert 0 <= inst.label <= 9

    def test_token_ids_in_vocab(self):
        for inst in gen_listops_mini(seed=6, depth=2, count=100):
            assert all(0 <= t < LISTOPS_VOCAB for t in inst.tokens)
            assert inst.tokens[0] in (OP_MAX, OP_MIN, OP_MED)
            assert inst.tokens[-1] == CLOSE

    def test_length_bounded(self):
        for depth in (1, 2, 3):
            cap = listops_max_len(depth)
            longest = max(len(inst.tokens)
                          for inst in gen_listops_mini(seed=7, depth=depth, count=200))
            assert longest <= cap

    def test_max_len_values(self):
        assert listops_max_len(1) == 5
        assert listops_max_len(2) == 17
        assert listops_max_len(3) == 53

    def test_depth_validated(self):
        with pytest.raises(InputError, match="depth"):
            gen_listops_mini(0, 0, 1)
        with pytest.raises(InputError, match="depth"):
            gen_listops_mini(0, 4, 1)

    def test_class_count(self):
        assert LISTOPS_CLASSES == 10
        labels = {inst.label for inst in gen_listops_mini(seed=8, depth=2, count=500)}
        assert labels <= set(range(10))


class TestFiles:
    def test_roundtrip_classification(self, tmp_path):
        instances = gen_majority(seed=1, n=5, vocab=3, count=25)
        path = str(tmp_path / "m.tsv")
        dump_instances(instances, path)
        assert load_instances(path) == instances

    def test_roundtrip_per_position(self, tmp_path):
        instances = gen_copy(seed=1, n=4, vocab=3, count=25)
        path = str(tmp_path / "c.tsv")
        dump_instances(instances, path)
        assert load_instances(path) == instances

    def test_bad_line_names_location(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("1 2 3\t0\nnot numbers\t0\n")
        with pytest.raises(InputError, match=r"bad\.tsv:2"):
            load_instances(str(path))

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "gaps.tsv"
        path.write_text("1 2\t0\n\n3 4\t1\n")
        loaded = load_instances(str(path))
        assert loaded == [TaskInstance(tokens=(1, 2), label=0),
                          TaskInstance(tokens=(3, 4), label=1)]


class TestDispatcher:
    def test_known_tasks(self):
        assert TASKS == ("copy", "majority", "listops")
        assert generate("copy", 0, 3, n=4, vocab=2)[0].label is not None
        assert generate("majority", 0, 3, n=5, vocab=2)[0].label in (0, 1)
        assert generate("listops", 0, 3, depth=1)[0].label in range(10)

    def test_unknown_task(self):
        with pytest.raises(InputError, match="nonesuch"):
            generate("nonesuch", 0, 1)
