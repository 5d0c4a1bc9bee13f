"""Joint prediction, value prediction, and frame assembly."""

import numpy as np
import pytest

from nbestslu.config import RunConfig
from nbestslu.data import collect_system_tokens
from nbestslu.decoder import (
    SemanticFrame,
    SlotValuePrediction,
    decode_turn,
    predict_joint,
    predict_value,
)
from nbestslu.errors import ConfigError, DomainError, ModelStateError
from nbestslu.model import SlotValueModel, StepOneModel

from _gradcheck import max_rel_error
from _synth import synthetic_dataset, synthetic_table

TOY = RunConfig(
    model="cnn_lstm_w4",
    embedding_dim=12,
    filter_windows=(2, 3),
    filters_per_window=4,
    hidden_size=8,
    batch_size=10,
    max_epochs=3,
    seed=3,
)


@pytest.fixture(scope="module")
def dataset():
    return synthetic_dataset(6, 4, seed=21)


@pytest.fixture(scope="module")
def store():
    return synthetic_table(dim=12)


def build_step1(dataset, store, config=TOY) -> StepOneModel:
    return StepOneModel.build(config, dataset.ontology, collect_system_tokens(dataset.turns), store)


def zero_heads(model: StepOneModel) -> None:
    for tensor in model.act_head:
        tensor.data[...] = 0.0
    for pair in model.slot_heads.values():
        for tensor in pair:
            tensor.data[...] = 0.0


class TestPredictJoint:
    def test_zero_weight_heads_give_uniform_distributions(self, dataset, store):
        model = build_step1(dataset, store)
        zero_heads(model)
        joint = predict_joint(model, dataset.turns[0])
        n_acts = len(dataset.ontology.acts)
        np.testing.assert_allclose(joint.act_probs, np.full(n_acts, 1.0 / n_acts), atol=1e-12)
        for slot in dataset.ontology.slots:
            assert joint.slot_presence[slot] == pytest.approx(0.5, abs=1e-12)

    def test_single_ln2_logit_closed_form(self, dataset, store):
        model = build_step1(dataset, store)
        zero_heads(model)
        # Force the act head to produce logits [0, ln 2, 0, ...].
        model.act_head[1].data[1] = np.log(2.0)
        joint = predict_joint(model, dataset.turns[0])
        n_acts = len(dataset.ontology.acts)
        assert joint.act_probs[1] == pytest.approx(2.0 / (n_acts + 1), abs=1e-12)

    def test_nan_parameters_are_a_model_state_error(self, dataset, store):
        model = build_step1(dataset, store)
        model.act_head[0].data[0, 0] = np.nan
        with pytest.raises(ModelStateError):
            predict_joint(model, dataset.turns[0])


class TestPredictValue:
    def test_zero_weight_model_gives_uniform_values(self, dataset, store):
        values = dataset.ontology.slot_values("pricerange")
        model = SlotValueModel.build(
            TOY, "pricerange", 0, values, collect_system_tokens(dataset.turns), store
        )
        for tensor in model.head:
            tensor.data[...] = 0.0
        probs = predict_value(model, dataset.turns[0], "pricerange")
        np.testing.assert_allclose(probs, np.full(len(values), 1.0 / len(values)), atol=1e-12)

    def test_wrong_slot_rejected(self, dataset, store):
        values = dataset.ontology.slot_values("pricerange")
        model = SlotValueModel.build(
            TOY, "pricerange", 0, values, collect_system_tokens(dataset.turns), store
        )
        with pytest.raises(DomainError):
            predict_value(model, dataset.turns[0], "food")

    def test_single_value_slots_cannot_build_a_model(self, dataset, store):
        with pytest.raises(ConfigError):
            SlotValueModel.build(TOY, "x", 0, ("only",), (), store)


class TestDecodeTurn:
    def test_frame_has_act_only_when_no_slot_crosses_threshold(self, dataset, store):
        model = build_step1(dataset, store)
        zero_heads(model)
        # Presence probability is exactly 0.5 everywhere: no slot detected.
        frame = decode_turn(dataset.turns[0], model, {})
        assert frame.slots == ()
        assert frame.act in dataset.ontology.acts

    def test_confidence_composition_is_a_product(self, dataset, store):
        # Zero weights plus log-probability biases make softmax heads emit
        # exact distributions: P(present) = 0.8 and P(best value) = 0.9,
        # so the decoded item confidence must be 0.72.
        model = build_step1(dataset, store)
        zero_heads(model)
        slot = "pricerange"
        model.slot_heads[slot][1].data[...] = np.log([0.2, 0.8])
        values = dataset.ontology.slot_values(slot)
        pos = dataset.ontology.slots.index(slot)
        value_model = SlotValueModel.build(
            TOY, slot, pos, values, collect_system_tokens(dataset.turns), store
        )
        for tensor in value_model.head:
            tensor.data[...] = 0.0
        value_probs = [0.9] + [0.1 / (len(values) - 1)] * (len(values) - 1)
        value_model.head[1].data[...] = np.log(value_probs)

        frame = decode_turn(dataset.turns[0], model, {slot: value_model})
        found = {s.slot: s for s in frame.slots}
        assert slot in found
        assert found[slot].value == values[0]
        assert found[slot].confidence == pytest.approx(0.72, abs=1e-12)
        with pytest.raises(DomainError):
            SemanticFrame("inform", 0.9, (SlotValuePrediction("a", "v", 0.0),))

    def test_decode_determinism(self, dataset, store):
        model = build_step1(dataset, store)
        frames_a = [decode_turn(t, model, {}, step1_only=True) for t in dataset.turns]
        frames_b = [decode_turn(t, model, {}, step1_only=True) for t in dataset.turns]
        assert frames_a == frames_b

    def test_output_slots_and_values_come_from_the_ontology(self, dataset, store):
        model = build_step1(dataset, store)
        rng = np.random.default_rng(0)
        # Random heads: force some detections.
        for pair in model.slot_heads.values():
            for tensor in pair:
                tensor.data[...] = rng.uniform(-2, 2, tensor.shape)
        slot_models = {}
        for pos, slot in enumerate(dataset.ontology.slots):
            values = dataset.ontology.slot_values(slot)
            if len(values) >= 2:
                slot_models[slot] = SlotValueModel.build(
                    TOY, slot, pos, values, collect_system_tokens(dataset.turns), store
                )
        for turn in dataset.turns:
            frame = decode_turn(turn, model, slot_models)
            assert frame.act in dataset.ontology.acts
            for item in frame.slots:
                assert item.slot in dataset.ontology.slots
                assert item.value in dataset.ontology.slot_values(item.slot)
                assert 0.0 < item.confidence <= 1.0

    def test_missing_value_model_for_multivalued_slot_is_an_error(self, dataset, store):
        model = build_step1(dataset, store)
        slot = dataset.ontology.slots[0]
        model.slot_heads[slot][1].data[...] = np.array([-5.0, 5.0])  # force detection
        assert len(dataset.ontology.slot_values(slot)) >= 2
        with pytest.raises(ConfigError):
            decode_turn(dataset.turns[0], model, {})

    def test_step1_only_frames_carry_presence_confidence(self, dataset, store):
        model = build_step1(dataset, store)
        slot = dataset.ontology.slots[0]
        model.slot_heads[slot][1].data[...] = np.array([-5.0, 5.0])
        frame = decode_turn(dataset.turns[0], model, {}, step1_only=True)
        found = [s for s in frame.slots if s.slot == slot]
        assert found and found[0].value is None and found[0].confidence > 0.98

    def test_cnn_variant_ignores_history(self, dataset, store):
        config = RunConfig(
            model="cnn", embedding_dim=12, filter_windows=(2, 3), filters_per_window=4,
            hidden_size=8, seed=3,
        )
        model = build_step1(dataset, store, config)
        turn = dataset.turns[3]
        assert len(turn.system_history) > 1
        stripped = type(turn)(turn.session, turn.index, turn.nbest, (), turn.reference)
        a = decode_turn(turn, model, {}, step1_only=True)
        b = decode_turn(stripped, model, {}, step1_only=True)
        assert a == b


class TestFullModelGradients:
    @pytest.mark.parametrize("variant", ["cnn", "cnn_lstm_w4", "lstm_all"])
    def test_loss_gradients_for_each_variant(self, dataset, store, variant):
        from nbestslu.autograd import add_n, nll_loss
        from nbestslu.decoder import turn_nbest

        config = RunConfig(
            model=variant, embedding_dim=12, filter_windows=(2, 3), filters_per_window=2,
            hidden_size=5, seed=9,
        )
        model = build_step1(dataset, store, config)
        turn = dataset.turns[1]
        nbest = turn_nbest(turn)
        params = model.parameters()

        def loss_fn():
            hidden = model.encoder.encode(nbest, turn.system_history)
            act_probs, slot_probs = model.head_probs(hidden)
            terms = [nll_loss(act_probs, 0)]
            for slot in model.ontology.slots:
                terms.append(nll_loss(slot_probs[slot], 1))
            return add_n(terms)

        rng = np.random.default_rng(11)
        worst = max_rel_error(loss_fn, params.values(), sample=6, rng=rng)
        assert worst < 1e-4, f"{variant}: max relative error {worst}"
