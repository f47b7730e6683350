import hashlib
import math

import numpy as np
import pytest
import torch

from drex.corpus import PairExample, build_input
from drex.errors import ConfigError
from drex.heads import relation_loss
from drex.metrics import loo_metric, null_explainer, random_span_explainer
from drex.system import (
    DrexConfig,
    DrexSystem,
    RewardBundle,
    drex_example_losses,
    drex_infer,
    drex_train_step,
    ensemble_probs,
    load_system,
    policy_gradient_loss,
    rerank_reward,
    save_system,
    write_predictions,
    read_predictions,
)
from drex.train import make_optimizer

from conftest import SMALL_SCHEMA, make_relation_model, make_span_model


@pytest.fixture
def system(tokenizer):
    config = DrexConfig(top_k=2, learning_rate=1e-3, batch_size=4, max_span_len=6)
    ranker = make_relation_model(tokenizer, seed=10)
    explainer = make_span_model(tokenizer, seed=11)
    return DrexSystem.initialize(ranker, explainer, config)


def param_digest(model):
    h = hashlib.sha256()
    for _, p in sorted(model.state_dict().items()):
        h.update(p.detach().numpy().tobytes())
    return h.hexdigest()


class TestRewards:
    def test_equal_losses_zero_reward(self):
        assert rerank_reward(0.7, 0.7) == 0.0

    def test_improvement_is_positive(self):
        assert rerank_reward(0.9, 0.4) == pytest.approx(0.5)

    def test_antisymmetry(self):
        assert rerank_reward(0.3, 0.8) == -rerank_reward(0.8, 0.3)

    def test_loo_absent_span_is_exactly_zero(self, system, pair):
        assert system.loo_reward(pair, None) == 0.0

    def test_loo_antisymmetry_of_loss_difference(self, system, pair):
        # masking either raises or lowers the loss; swapping the roles negates it
        reward = system.loo_reward(pair, (0, 1))
        y = system.gold_vector(pair)
        inp = system.ranker_input(pair)
        with torch.no_grad():
            clean = float(relation_loss(system.ranker.probs(inp), y))
        from drex.corpus import dialogue_span_to_input, mask_span

        masked_inp = mask_span(inp, dialogue_span_to_input((0, 1), inp), system.ranker.tokenizer)
        with torch.no_grad():
            masked = float(relation_loss(system.ranker.probs(masked_inp), y))
        assert reward == pytest.approx(masked - clean, abs=1e-7)

    def test_reward_signs_constructed_via_oracle(self, system, pair):
        # feed the re-ranker a text that lowers its loss -> positive reward
        y = system.gold_vector(pair)
        with torch.no_grad():
            loss_r = float(relation_loss(system.ranker.probs(system.ranker_input(pair)), y))
        good_loss = loss_r - 0.25
        assert rerank_reward(loss_r, good_loss) > 0


class TestPolicyGradientLoss:
    def test_zero_reward_gives_zero_loss_and_gradient(self):
        lp_s = torch.tensor(-0.4, requires_grad=True)
        lp_e = torch.tensor(-0.9, requires_grad=True)
        loss = policy_gradient_loss(lp_s, lp_e, RewardBundle(0.0, 0.0))
        loss.backward()
        assert loss.item() == 0.0
        assert lp_s.grad.item() == 0.0
        assert lp_e.grad.item() == 0.0

    def test_hand_computed_value(self):
        lp = torch.tensor(math.log(0.5))
        loss = policy_gradient_loss(lp, lp, RewardBundle(1.0, 0.0))
        assert loss.item() == pytest.approx(2 * math.log(2.0), abs=1e-6)

    def test_positive_reward_increases_chosen_log_probs(self):
        torch.manual_seed(0)
        logits = torch.randn(8, requires_grad=True)
        opt = torch.optim.SGD([logits], lr=0.5)
        i, j = 3, 5
        before = torch.softmax(logits, 0)[i].item(), torch.softmax(logits, 0)[j].item()
        dist = torch.softmax(logits, 0)
        loss = policy_gradient_loss(torch.log(dist[i]), torch.log(dist[j]), RewardBundle(1.0, 0.5))
        opt.zero_grad()
        loss.backward()
        opt.step()
        after = torch.softmax(logits, 0)
        assert after[i].item() > before[0]
        assert after[j].item() > before[1]

    def test_gradient_matches_finite_differences(self):
        torch.manual_seed(4)
        logits = torch.randn(10, dtype=torch.float64, requires_grad=True)
        rewards = RewardBundle(0.7, -0.2)
        i, j = 4, 7

        def compute(z):
            dist = torch.softmax(z, 0)
            return policy_gradient_loss(torch.log(dist[i]), torch.log(dist[j]), rewards)

        loss = compute(logits)
        loss.backward()
        eps = 1e-4
        for k in range(10):
            z = logits.detach().clone()
            z[k] += eps
            up = compute(z).item()
            z[k] -= 2 * eps
            down = compute(z).item()
            fd = (up - down) / (2 * eps)
            assert abs(fd - logits.grad[k].item()) / max(abs(fd), 1e-8) < 1e-4


class TestEnsemble:
    def test_identical_vectors_exact(self):
        p = np.random.default_rng(0).uniform(size=8)
        out = ensemble_probs(p, [p.copy() for _ in range(5)])
        assert np.array_equal(out, p)

    def test_k_equals_one_mean(self):
        p = np.array([0.2, 0.8])
        q = np.array([0.6, 0.4])
        out = ensemble_probs(p, [q])
        assert np.allclose(out, (p + q) / 2, atol=1e-12)

    def test_order_invariance(self):
        rng = np.random.default_rng(3)
        p = rng.uniform(size=12)
        qs = [rng.uniform(size=12) for _ in range(5)]
        a = ensemble_probs(p, qs)
        b = ensemble_probs(p, list(reversed(qs)))
        assert np.array_equal(a, b)


class TestSystem:
    def test_reranker_initialized_as_ranker_copy(self, system):
        assert param_digest(system.ranker) == param_digest(system.reranker)
        assert system.ranker is not system.reranker

    def test_ranker_frozen_through_steps(self, system, pair):
        digest_before = param_digest(system.ranker)
        probe = system.ranker_input(pair)
        with torch.no_grad():
            probs_before = system.ranker.probs(probe).clone()
        opt = make_optimizer(system.trainable_parameters(), system.config)
        gen = torch.Generator().manual_seed(0)
        for _ in range(5):
            drex_train_step(system, [pair], opt, gen)
        assert param_digest(system.ranker) == digest_before
        with torch.no_grad():
            assert torch.equal(system.ranker.probs(probe), probs_before)

    def test_rewards_have_no_gradient_into_reranker_via_policy_loss(self, system, pair):
        gen = torch.Generator().manual_seed(1)
        loss, report = drex_example_losses(system, pair, gen)
        pg_only = sum(
            policy_gradient_loss(torch.tensor(0.0, requires_grad=True), torch.tensor(0.0), e.rewards)
            for e in report.examples[0].relation_entries
        ) if hasattr(report, "examples") else None
        # rewards are plain floats by construction: no tensor graph can reach RR
        entry = report.relation_entries[0]
        assert isinstance(entry.rewards.rerank_reward, float)
        assert isinstance(entry.rewards.loo_reward, float)

    def test_step_report_shape_without_trigger(self, system, dialogue):
        bare = PairExample(
            dialogue=dialogue,
            subject="Speaker 1",
            object="Speaker 2",
            relations=("per:friends",),
            triggers={},
            pair_id="p",
        )
        opt = make_optimizer(system.trainable_parameters(), system.config)
        gen = torch.Generator().manual_seed(2)
        report = drex_train_step(system, [bare], opt, gen)
        ex = report.examples[0]
        assert len(ex.relation_entries) == system.config.top_k
        assert all(e.span is not None for e in ex.relation_entries)
        assert ex.supervised_span_losses == []

    def test_step_report_with_triggers(self, system, pair):
        opt = make_optimizer(system.trainable_parameters(), system.config)
        gen = torch.Generator().manual_seed(3)
        report = drex_train_step(system, [pair], opt, gen)
        ex = report.examples[0]
        assert len(ex.relation_entries) == system.config.top_k
        assert len(ex.supervised_span_losses) == 2  # both triggers align

    def test_unaligned_trigger_skips_supervision(self, system, dialogue):
        bad = PairExample(
            dialogue=dialogue,
            subject="Speaker 1",
            object="Speaker 2",
            relations=("per:friends",),
            triggers={"per:friends": "phrase that never occurs"},
            pair_id="p",
        )
        opt = make_optimizer(system.trainable_parameters(), system.config)
        report = drex_train_step(system, [bad], opt, torch.Generator().manual_seed(4))
        ex = report.examples[0]
        assert ex.skipped_unaligned == 1
        assert ex.supervised_span_losses == []

    def test_sampled_spans_stay_in_dialogue(self, system, pair):
        gen = torch.Generator().manual_seed(5)
        for _ in range(10):
            _, report = drex_example_losses(system, pair, gen)
            for entry in report.relation_entries:
                i, j = entry.span
                ex_input = system.explainer_input(pair, entry.relation)
                lo, hi = ex_input.dialogue_region
                assert lo <= i <= j < hi

    def test_overfitting_single_example_reduces_rr_loss(self, system, pair):
        opt = make_optimizer(system.trainable_parameters(), system.config)
        gen = torch.Generator().manual_seed(6)
        losses = []
        for _ in range(50):
            report = drex_train_step(system, [pair], opt, gen)
            losses.append(report.mean_rr_loss)
        smooth = [sum(losses[i : i + 10]) / 10 for i in range(0, 41, 10)]
        assert smooth[-1] < smooth[0]
        assert all(b <= a + 0.05 for a, b in zip(smooth, smooth[1:]))


class TestInference:
    def test_reranker_equal_to_ranker_leaves_probs_exact(self, system, pair):
        system.reranker.load_state_dict(system.ranker.state_dict())
        pred = drex_infer(system, pair)
        with torch.no_grad():
            base = system.ranker.probs(system.ranker_input(pair)).double().numpy()
        if any(e.text for e in pred.explanations):
            # conditioning changes the re-ranker's input, so only check shape
            assert pred.final_probs.shape == base.shape
        else:
            assert np.array_equal(pred.final_probs, base)

    def test_explanations_cover_top_k(self, system, pair):
        pred = drex_infer(system, pair)
        assert len(pred.explanations) == system.config.top_k
        assert pred.top_relations == [e.relation for e in pred.explanations]

    def test_prediction_dump_round_trip(self, system, pair, tmp_path):
        pred = drex_infer(system, pair)
        path = tmp_path / "preds.ndjson"
        write_predictions([pred], path)
        records = read_predictions(path)
        assert len(records) == 1
        rec = records[0]
        assert rec["subject"] == pair.subject
        assert rec["gold"] == list(pair.gold_labels(SMALL_SCHEMA))
        assert len(rec["final_probs"]) == SMALL_SCHEMA.size
        assert [e.relation for e in rec["explanations"]] == pred.top_relations


class TestLooMetric:
    def test_null_explainer_is_exactly_one(self, tokenizer, pair):
        rater = make_relation_model(tokenizer, seed=20)
        assert loo_metric(rater, null_explainer, [pair]) == 1.0

    def test_random_explainer_masks_within_dialogue(self, tokenizer, pair):
        rater = make_relation_model(tokenizer, seed=21)
        explainer = random_span_explainer(np.random.default_rng(0))
        value = loo_metric(rater, explainer, [pair])
        assert value >= 0.0


class TestCheckpoint:
    def test_system_round_trip(self, system, pair, tmp_path):
        pred_before = drex_infer(system, pair)
        save_system(system, tmp_path / "sys")
        loaded = load_system(tmp_path / "sys")
        assert loaded.config == system.config
        pred_after = drex_infer(loaded, pair)
        assert np.array_equal(pred_before.final_probs, pred_after.final_probs)
        assert [e.span for e in pred_before.explanations] == [e.span for e in pred_after.explanations]

    def test_missing_checkpoint_raises_config_error(self, tmp_path):
        with pytest.raises((ConfigError, FileNotFoundError)):
            load_system(tmp_path / "nowhere")


class TestConfig:
    def test_top_k_bounds(self):
        with pytest.raises(ConfigError):
            DrexConfig(top_k=0)

    def test_top_k_cannot_exceed_schema(self, tokenizer):
        config = DrexConfig(top_k=10)
        ranker = make_relation_model(tokenizer)
        explainer = make_span_model(tokenizer)
        with pytest.raises(ConfigError):
            DrexSystem.initialize(ranker, explainer, config)

    def test_loo_reference_validated(self):
        with pytest.raises(ConfigError):
            DrexConfig(loo_reference="elsewhere")
