import unittest

import logging

import numpy as np

from avcap import blocks
from avcap import tensors
from avcap.constants import InputError, NumericalError, ShapeError
from avcap.tensors import ModelParams, Tensor

logger = logging.getLogger(__name__)
logging.basicConfig(format='%(asctime)s %(module)s %(levelname)s: %(message)s',
                    datefmt='%m/%d/%Y %I:%M:%S %p', level=logging.DEBUG)


def t64(data, requires_grad=False) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=requires_grad)


def numeric_gradient(f, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        plus = f(x)
        flat[i] = original - step
        minus = f(x)
        flat[i] = original
        gflat[i] = (plus - minus) / (2 * step)
    return grad


def analytic_gradient(f_tensor, x: np.ndarray) -> np.ndarray:
    xt = t64(x, requires_grad=True)
    f_tensor(xt).backward()
    return xt.grad


class Test_basic_ops(unittest.TestCase):

    def test_matmul_by_hand(self):
        # act
        actual = tensors.matmul(t64([[1, 2], [3, 4]]), t64([[5, 6], [7, 8]]))

        # assert
        np.testing.assert_array_equal([[19, 22], [43, 50]], actual.data)

    def test_matmul_rejects_mismatched_inner_dimensions(self):
        with self.assertRaises(ShapeError):
            tensors.matmul(t64(np.zeros((2, 3))), t64(np.zeros((2, 3))))

    def test_matmul_rejects_vectors(self):
        with self.assertRaises(ShapeError):
            tensors.matmul(t64(np.zeros(3)), t64(np.zeros((3, 2))))

    def test_layer_norm_by_hand(self):
        # act
        actual = tensors.layer_norm(t64([[1.0, 2.0, 3.0]]), t64(np.ones(3)), t64(np.zeros(3)))

        # assert
        np.testing.assert_allclose([[-1.2247, 0.0, 1.2247]], actual.data, atol=1e-4)

    def test_layer_norm_of_a_constant_row_is_beta(self):
        # act
        actual = tensors.layer_norm(t64([[5.0, 5.0, 5.0, 5.0]]), t64([2.0, 2.0, 2.0, 2.0]), t64([0.5, 0, 0, 1]))

        # assert
        np.testing.assert_allclose([[0.5, 0.0, 0.0, 1.0]], actual.data, atol=1e-12)

    def test_layer_norm_rejects_mismatched_parameters(self):
        with self.assertRaises(ShapeError):
            tensors.layer_norm(t64(np.zeros((2, 4))), t64(np.ones(3)), t64(np.zeros(3)))

    def test_softmax_of_equal_scores_is_uniform(self):
        # act
        actual = tensors.masked_softmax(t64([[1.0, 1.0, 1.0]]))

        # assert
        np.testing.assert_allclose([[1 / 3, 1 / 3, 1 / 3]], actual.data)

    def test_masked_entries_get_zero_weight(self):
        # act
        actual = tensors.masked_softmax(t64([[1.0, 1.0, 1.0]]), np.array([[1, 0, 1]]))

        # assert
        np.testing.assert_allclose([[0.5, 0.0, 0.5]], actual.data, atol=1e-12)

    def test_fully_masked_row_is_rejected(self):
        with self.assertRaises(NumericalError):
            tensors.masked_softmax(t64([[1.0, 2.0], [3.0, 4.0]]), np.array([[1, 1], [0, 0]]))

    def test_mask_of_wrong_shape_is_rejected(self):
        with self.assertRaises(ShapeError):
            tensors.masked_softmax(t64(np.zeros((2, 3))), np.ones((2, 2)))

    def test_gelu_of_one(self):
        # act
        actual = tensors.gelu(t64([0.0, 1.0, -1.0]))

        # assert
        np.testing.assert_allclose([0.0, 0.8413, -0.1587], actual.data, atol=1e-3)

    def test_log_softmax_rows_exponentiate_to_one(self):
        # act
        actual = tensors.log_softmax(t64(np.random.default_rng(0).standard_normal((3, 5)) * 10))

        # assert
        np.testing.assert_allclose(np.exp(actual.data).sum(axis=-1), 1.0)

    def test_non_finite_results_raise(self):
        with self.assertRaises(NumericalError):
            _ = t64([1.0, np.inf]) + 1.0

    def test_embedding_rejects_out_of_range_ids(self):
        with self.assertRaises(InputError):
            tensors.embedding_lookup(t64(np.zeros((4, 2))), [0, 4])

    def test_concat_rejects_mismatched_shapes(self):
        with self.assertRaises(ShapeError):
            tensors.concat([t64(np.zeros((2, 3))), t64(np.zeros((2, 4)))], axis=0)


class Test_backward(unittest.TestCase):

    def test_square_sum_gradient_is_twice_the_input(self):
        # arrange
        x = t64([1.0, -2.0, 3.0], requires_grad=True)

        # act
        (x * x).sum().backward()

        # assert
        np.testing.assert_array_equal([2.0, -4.0, 6.0], x.grad)

    def test_broadcast_gradient_is_summed_back(self):
        # arrange
        x = t64(np.ones((3, 2)), requires_grad=True)
        b = t64([10.0, 20.0], requires_grad=True)

        # act
        (x + b).sum().backward()

        # assert
        np.testing.assert_array_equal([3.0, 3.0], b.grad)
        np.testing.assert_array_equal(np.ones((3, 2)), x.grad)

    def test_repeated_embedding_ids_accumulate(self):
        # arrange
        table = t64(np.arange(8.0).reshape(4, 2), requires_grad=True)

        # act
        tensors.embedding_lookup(table, [1, 1, 0]).sum().backward()

        # assert
        np.testing.assert_array_equal([[1, 1], [2, 2], [0, 0], [0, 0]], table.grad)

    def test_no_grad_records_nothing(self):
        # arrange
        x = t64([1.0, 2.0], requires_grad=True)

        # act
        with tensors.no_grad():
            y = x * x

        # assert
        self.assertFalse(y.requires_grad)

    def test_non_scalar_loss_is_rejected(self):
        with self.assertRaises(ShapeError):
            t64([1.0, 2.0], requires_grad=True).backward()

    def test_gradients_match_finite_differences(self):
        # arrange
        rng = np.random.default_rng(3)
        weights = rng.standard_normal((2, 4))
        gamma, beta = rng.standard_normal(4), rng.standard_normal(4)
        mask = np.array([[1, 1, 0, 1], [1, 0, 1, 1]])
        cases = {
            'layer_norm': lambda x: (tensors.layer_norm(x, t64(gamma), t64(beta)) * t64(weights)).sum(),
            'masked_softmax': lambda x: (tensors.masked_softmax(x, mask) * t64(weights)).sum(),
            'log_softmax': lambda x: (tensors.log_softmax(x) * t64(weights)).sum(),
            'gelu': lambda x: (tensors.gelu(x) * t64(weights)).sum(),
            'matmul': lambda x: (tensors.matmul(x, t64(weights.T)) * t64(np.eye(2))).sum(),
            'transpose_reshape': lambda x: (x.transpose(1, 0).reshape(2, 4) * t64(weights)).sum(),
        }

        for name, f in cases.items():
            x = rng.standard_normal((2, 4))

            # act
            analytic = analytic_gradient(f, x.copy())
            with tensors.no_grad():
                numeric = numeric_gradient(lambda a: f(t64(a)).item(), x.copy())

            # assert
            np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-7, err_msg=name)


class Test_attention(unittest.TestCase):

    def _params(self, D: int, rng: np.random.Generator) -> ModelParams:
        params = ModelParams()
        for proj in blocks.ATTENTION_PROJECTIONS:
            params.add('attn.{}.weight'.format(proj), rng.standard_normal((D, D)))
            params.add('attn.{}.bias'.format(proj), rng.standard_normal(D))
        return params

    def test_multi_head_attention_matches_a_per_head_loop(self):
        # arrange
        rng = np.random.default_rng(7)
        N, D, H = 5, 8, 2
        dh = D // H
        params = self._params(D, rng)
        x = rng.standard_normal((N, D))
        w = {p: params['attn.{}.weight'.format(p)].data for p in blocks.ATTENTION_PROJECTIONS}
        b = {p: params['attn.{}.bias'.format(p)].data for p in blocks.ATTENTION_PROJECTIONS}
        q, k, v = (x @ w[p] + b[p] for p in ('query', 'key', 'value'))
        heads = []
        for h in range(H):
            cols = slice(h * dh, (h + 1) * dh)
            scores = q[:, cols] @ k[:, cols].T / np.sqrt(dh)
            weights = np.exp(scores - scores.max(axis=1, keepdims=True))
            weights /= weights.sum(axis=1, keepdims=True)
            heads.append(weights @ v[:, cols])
        expected = np.concatenate(heads, axis=1) @ w['out'] + b['out']

        # act
        actual = blocks.multi_head_self_attention(t64(x), params, 'attn', H)

        # assert
        np.testing.assert_allclose(expected, actual.data, rtol=1e-10, atol=1e-10)

    def test_heads_must_divide_the_dimension(self):
        # arrange
        params = self._params(6, np.random.default_rng(0))

        # act / assert
        with self.assertRaises(ShapeError):
            blocks.multi_head_self_attention(t64(np.zeros((3, 6))), params, 'attn', 4)


class Test_model_params(unittest.TestCase):

    def setUp(self):
        self.params = ModelParams()
        self.params.add('audio_encoder.pos_embed', np.zeros((4, 2)))
        self.params.add('decoder.norm.weight', np.ones(2))
        self.params.add('audio_encoder.norm.weight', np.ones(2))
        self.params.add('head.bias', np.zeros(3), trainable=False)

    def test_groups_are_in_first_seen_order(self):
        self.assertEqual(['audio_encoder', 'decoder', 'head'], self.params.groups())
        self.assertEqual(['audio_encoder.pos_embed', 'audio_encoder.norm.weight'],
                         self.params.names_in_group('audio_encoder'))

    def test_numel_counts_every_entry(self):
        self.assertEqual(8 + 2 + 2 + 3, self.params.numel())

    def test_duplicate_names_are_rejected(self):
        with self.assertRaises(ShapeError):
            self.params.add('head.bias', np.zeros(3))

    def test_unknown_names_are_rejected(self):
        with self.assertRaises(ShapeError):
            _ = self.params['decoder.missing']

    def test_assign_checks_the_shape(self):
        with self.assertRaises(ShapeError):
            self.params.assign('head.bias', np.zeros(4))

    def test_astype_copies_values_and_flags(self):
        # act
        copy = self.params.astype(np.float64)
        copy['decoder.norm.weight'].data[0] = 9.0

        # assert
        self.assertEqual(np.float64, copy.dtype)
        self.assertFalse(copy.is_trainable('head.bias'))
        self.assertEqual(1.0, float(self.params['decoder.norm.weight'].data[0]))

    def test_backward_reports_trainable_parameters_only(self):
        # arrange
        loss = (self.params['decoder.norm.weight'] * self.params['decoder.norm.weight']).sum()

        # act
        grads = tensors.backward(loss, self.params)

        # assert
        self.assertNotIn('head.bias', grads)
        np.testing.assert_array_equal([2.0, 2.0], grads['decoder.norm.weight'])
        np.testing.assert_array_equal(np.zeros((4, 2)), grads['audio_encoder.pos_embed'])

    def test_freezing_a_group(self):
        # act
        self.params.set_group_trainable('audio_encoder', False)

        # assert
        self.assertEqual(['decoder.norm.weight'], self.params.trainable_names())


if __name__ == '__main__':
    unittest.main()
