import itertools

import numpy as np
import pytest
import torch

from stylevc.corpus import PhonemeInventory
from stylevc.errors import InfeasibleAlignmentError, InvalidConfigError, InvalidInputError
from stylevc.features import MelSpectrogram
from stylevc.recognizer import (
    RecognizerConfig,
    check_feasible,
    ctc_force_align,
    ctc_log_likelihood,
    ctc_viterbi_durations,
    encode,
    hybrid_loss,
    hybrid_loss_tensors,
    init_checkpoint,
    min_frames,
    recognize,
)
from stylevc.recognizer.ctc import extended_states
from stylevc.training import TrainSchedule

from helpers import finite_difference_check, oracle_ctc_best_path, oracle_ctc_log_likelihood


@pytest.fixture(scope="module")
def inventory():
    return PhonemeInventory(("a", "b", "c"))


MICRO = RecognizerConfig(encoder_blocks=1, decoder_blocks=1, attention_heads=2,
                         model_width=8, n_mels=8, ffn_multiplier=2)


@pytest.fixture(scope="module")
def micro_ckpt(inventory):
    return init_checkpoint(MICRO, inventory, seed=1, dtype=torch.float64)


def random_mel(t, n_mels=8, seed=0):
    rng = np.random.default_rng(seed)
    return MelSpectrogram(rng.standard_normal((t, n_mels)), 12.5, 50.0)


class TestConfig:
    def test_defaults_match_documented_values(self):
        cfg = RecognizerConfig()
        assert cfg.ctc_weight == 0.3
        assert cfg.encoder_blocks == 12
        assert cfg.decoder_blocks == 6
        assert cfg.attention_heads == 8
        assert cfg.subsample_factor == 4

    def test_heads_must_divide_width(self):
        with pytest.raises(InvalidConfigError):
            RecognizerConfig(model_width=10, attention_heads=4).validate()

    def test_weight_range(self):
        with pytest.raises(InvalidConfigError):
            RecognizerConfig(ctc_weight=1.5).validate()


class TestCtcCore:
    def test_extended_states(self):
        assert extended_states([5, 7], blank=9) == [9, 5, 9, 7, 9]

    def test_min_frames_counts_repeats(self):
        assert min_frames([1, 2, 3]) == 3
        assert min_frames([1, 1, 2]) == 4
        assert min_frames([]) == 0

    def test_forward_matches_brute_force_all_small_instances(self):
        torch.manual_seed(0)
        blank = 3
        checked = 0
        for t_len in range(1, 5):
            for lab_len in range(0, 3):
                for labels in itertools.product(range(3), repeat=lab_len):
                    if min_frames(labels) > t_len:
                        continue
                    lp = torch.log_softmax(
                        torch.randn(t_len, 4, dtype=torch.float64), dim=-1
                    )
                    mine = float(ctc_log_likelihood(lp, list(labels), blank))
                    ref = oracle_ctc_log_likelihood(lp.numpy(), list(labels), blank)
                    assert ref is not None
                    assert abs(mine - ref) < 1e-6, (t_len, labels)
                    checked += 1
        assert checked == 40

    def test_infeasible_pair_rejected(self):
        lp = torch.log_softmax(torch.randn(2, 4, dtype=torch.float64), dim=-1)
        with pytest.raises(InfeasibleAlignmentError):
            ctc_log_likelihood(lp, [0, 1, 2], blank=3)
        with pytest.raises(InfeasibleAlignmentError):
            check_feasible(2, [1, 1])  # repeat needs a separating blank

    def test_viterbi_matches_exhaustive_best_path(self):
        torch.manual_seed(1)
        blank = 3
        for trial in range(40):
            lp = torch.log_softmax(torch.randn(3, 4, dtype=torch.float64), dim=-1)
            durations = ctc_viterbi_durations(lp, [0, 1], blank)
            best_lp, best_path = oracle_ctc_best_path(lp.numpy(), [0, 1], blank)
            # recover durations from the enumerated best path with the same
            # attribution rule: blanks attach to the previous label
            expect = [0, 0]
            current = 0
            for s in best_path:
                if s != blank:
                    current = 0 if s == 0 else 1
                expect[current] += 1
            assert durations == expect, (trial, best_path)

    def test_viterbi_durations_partition_frames(self):
        torch.manual_seed(2)
        for trial in range(20):
            labels = [0, 1, 2]
            lp = torch.log_softmax(torch.randn(9, 4, dtype=torch.float64), dim=-1)
            durations = ctc_viterbi_durations(lp, labels, blank=3)
            assert sum(durations) == 9
            assert all(d >= 1 for d in durations)


class TestEncode:
    def test_length_is_ceil_t_over_factor(self, micro_ckpt):
        assert encode(random_mel(40), micro_ckpt).shape == (10, 8)
        assert encode(random_mel(41), micro_ckpt).shape == (11, 8)

    def test_deterministic(self, micro_ckpt):
        mel = random_mel(20, seed=3)
        a = encode(mel, micro_ckpt)
        b = encode(mel, micro_ckpt)
        assert torch.equal(a, b)

    def test_too_short_rejected(self, micro_ckpt):
        with pytest.raises(InvalidInputError):
            encode(random_mel(3), micro_ckpt)


class TestHybridLoss:
    def test_endpoints_reduce_to_single_terms(self, micro_ckpt):
        mel = random_mel(12, seed=4)
        at_one = hybrid_loss(mel, (0, 1), micro_ckpt, ctc_weight=1.0)
        assert at_one.total == at_one.ctc_term
        at_zero = hybrid_loss(mel, (0, 1), micro_ckpt, ctc_weight=0.0)
        assert at_zero.total == at_zero.att_term

    def test_weighted_sum_example(self):
        from stylevc.recognizer import combine_hybrid

        assert combine_hybrid(2.0, 1.0, 0.3) == pytest.approx(1.3, abs=1e-12)

    def test_monotone_in_components(self):
        from stylevc.recognizer import combine_hybrid

        # raising the CTC term with the attention term fixed never lowers
        # the loss for any positive weight
        for weight in (0.1, 0.3, 0.9, 1.0):
            assert combine_hybrid(3.0, 1.0, weight) >= combine_hybrid(2.0, 1.0, weight)
        for weight in (0.0, 0.3, 0.9):
            assert combine_hybrid(2.0, 2.5, weight) >= combine_hybrid(2.0, 1.0, weight)

    def test_weighted_sum_arithmetic(self, micro_ckpt):
        mel = random_mel(12, seed=4)
        out = hybrid_loss(mel, (0, 1), micro_ckpt, ctc_weight=0.3)
        assert abs(out.total - (0.3 * out.ctc_term + 0.7 * out.att_term)) < 1e-9

    def test_components_non_negative_and_finite(self, micro_ckpt):
        for seed in range(5):
            out = hybrid_loss(random_mel(16, seed=seed), (0, 2, 1), micro_ckpt)
            assert out.ctc_term >= 0.0
            assert out.att_term >= 0.0
            assert np.isfinite(out.total)

    def test_monotone_in_weight_given_fixed_terms(self, micro_ckpt):
        # with ctc_term > att_term, raising the weight never lowers the loss
        mel = random_mel(12, seed=4)
        terms = hybrid_loss(mel, (0, 1), micro_ckpt, ctc_weight=0.5)
        lo, hi = (0.2, 0.8) if terms.ctc_term >= terms.att_term else (0.8, 0.2)
        low = hybrid_loss(mel, (0, 1), micro_ckpt, ctc_weight=lo)
        high = hybrid_loss(mel, (0, 1), micro_ckpt, ctc_weight=hi)
        assert high.total >= low.total - 1e-12

    def test_micro_ctc_equals_path_enumeration(self, micro_ckpt):
        # 2 encoded frames (T=8, factor 4), 1 label
        mel = random_mel(8, seed=6)
        out = hybrid_loss(mel, (2,), micro_ckpt, ctc_weight=1.0)
        encoded = encode(mel, micro_ckpt)
        log_probs = micro_ckpt.model.ctc_log_probs(encoded)
        ref = oracle_ctc_log_likelihood(
            log_probs.detach().numpy(), [2], micro_ckpt.model.blank_id
        )
        assert abs(out.ctc_term - (-ref)) < 1e-9

    def test_infeasible_pair_rejected(self, micro_ckpt):
        mel = random_mel(4, seed=7)  # one encoded frame
        with pytest.raises(InfeasibleAlignmentError):
            hybrid_loss(mel, (0, 1), micro_ckpt)


class TestGradients:
    def test_hybrid_loss_gradient_matches_finite_differences(self, inventory):
        ckpt = init_checkpoint(MICRO, inventory, seed=11, dtype=torch.float64)
        model = ckpt.model
        mel = torch.from_numpy(
            np.random.default_rng(8).standard_normal((10, 8))
        )
        def loss_fn():
            return hybrid_loss_tensors(model, mel, (0, 1, 2), 0.3)[0]

        worst, _ = finite_difference_check(model, loss_fn, h=1e-5, rel_tol=1e-4)
        assert worst <= 1e-4


class TestRecognize:
    def test_zero_beam_rejected(self, micro_ckpt):
        with pytest.raises(InvalidInputError):
            recognize(random_mel(12), micro_ckpt, beam=0)

    def test_beam_never_scores_below_greedy(self, micro_ckpt):
        for seed in range(6):
            mel = random_mel(16, seed=seed)
            greedy = recognize(mel, micro_ckpt, beam=1)
            wide = recognize(mel, micro_ckpt, beam=4)
            assert wide.score >= greedy.score - 1e-12

    def test_output_tokens_within_inventory(self, micro_ckpt, inventory):
        result = recognize(random_mel(16, seed=9), micro_ckpt, beam=2)
        for tok in result.tokens:
            assert 0 <= tok < len(inventory.symbols)


class TestForceAlign:
    def test_single_phoneme_takes_all_frames(self, micro_ckpt):
        durations = ctc_force_align(random_mel(8, seed=10), (1,), micro_ckpt)
        assert durations == [8]

    def test_durations_partition_mel_frames(self, micro_ckpt):
        for t in (8, 9, 10, 11):
            durations = ctc_force_align(random_mel(t, seed=t), (0, 1), micro_ckpt)
            assert sum(durations) == t
            assert all(d >= 1 for d in durations)

    def test_empty_sequence_rejected(self, micro_ckpt):
        with pytest.raises(InvalidInputError):
            ctc_force_align(random_mel(8), (), micro_ckpt)


class TestTraining:
    def test_zero_steps_returns_initialization(self, inventory):
        from stylevc.recognizer import train_recognizer

        dataset = [(random_mel(12, seed=i), (0, 1)) for i in range(3)]
        ckpt = train_recognizer(dataset, MICRO, TrainSchedule(steps=0), inventory, seed=5)
        fresh = init_checkpoint(MICRO, inventory, seed=5, dtype=torch.float32)
        for (a_name, a), (b_name, b) in zip(
            ckpt.model.state_dict().items(), fresh.model.state_dict().items()
        ):
            assert a_name == b_name
            assert torch.equal(a, b.to(a.dtype)), a_name

    def test_infeasible_pair_fails_before_first_step(self, inventory):
        from stylevc.recognizer import train_recognizer

        dataset = [(random_mel(12, seed=0), (0, 1)),
                   (random_mel(4, seed=1), (0, 1, 2, 0))]  # infeasible
        with pytest.raises(InfeasibleAlignmentError):
            train_recognizer(dataset, MICRO, TrainSchedule(steps=3), inventory)

    def test_loss_decreases_on_tiny_problem(self, inventory, tmp_path):
        from stylevc.recognizer import train_recognizer

        dataset = [(random_mel(12, seed=i), (i % 3,)) for i in range(4)]
        log_path = tmp_path / "log.csv"
        train_recognizer(
            dataset, MICRO,
            TrainSchedule(steps=60, batch_size=2, learning_rate=3e-3, warmup_steps=10),
            inventory, seed=2, log_path=log_path,
        )
        rows = log_path.read_text().splitlines()
        assert rows[0] == "step,total,ctc_term,att_term"
        first = float(rows[1].split(",")[1])
        last = float(rows[-1].split(",")[1])
        assert last < first


class TestCheckpointIO:
    def test_save_load_round_trip(self, micro_ckpt, inventory, tmp_path):
        from stylevc.recognizer import RecognizerCheckpoint

        micro_ckpt.save(tmp_path / "ck")
        loaded = RecognizerCheckpoint.load(tmp_path / "ck", inventory)
        assert loaded.config == micro_ckpt.config
        assert loaded.step == micro_ckpt.step
        mel = random_mel(12, seed=12)
        a = encode(mel, micro_ckpt)
        b = encode(mel, loaded)
        assert torch.allclose(a, b.to(a.dtype))

    def test_wrong_inventory_rejected(self, micro_ckpt, tmp_path):
        from stylevc.recognizer import RecognizerCheckpoint

        micro_ckpt.save(tmp_path / "ck")
        other = PhonemeInventory(("x", "y"))
        with pytest.raises(InvalidInputError):
            RecognizerCheckpoint.load(tmp_path / "ck", other)
