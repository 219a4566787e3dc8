import numpy as np
import pytest

from audioanomaly.graphrt import GraphExecError, GraphExecutor

import onnx_helpers as w


def _executor(tmp_path, nodes, inits, input_shape, output="y"):
    path = tmp_path / "g.onnx"
    w.write_model(path, nodes, inits, "x", input_shape, output)
    return GraphExecutor.from_file(str(path))


class TestSingleOps:
    def test_relu(self, tmp_path):
        ex = _executor(tmp_path, [w.node("Relu", ["x"], ["y"])], {}, [1, 4])
        out = ex.run(np.array([[-1.0, 0.0, 2.5, -0.1]], dtype=np.float32))
        np.testing.assert_array_equal(out, [[0.0, 0.0, 2.5, 0.0]])

    def test_conv_hand_computed(self, tmp_path):
        # 1x1x3x3 input, single 2x2 kernel of ones, stride 1, no padding:
        # each output cell is the window sum
        kernel = np.ones((1, 1, 2, 2), dtype=np.float32)
        ex = _executor(
            tmp_path,
            [w.node("Conv", ["x", "w0"], ["y"], kernel_shape=[2, 2])],
            {"w0": kernel}, [1, 1, 3, 3],
        )
        x = np.arange(9, dtype=np.float32).reshape(1, 1, 3, 3)
        out = ex.run(x)
        np.testing.assert_array_equal(out[0, 0], [[8.0, 12.0], [20.0, 24.0]])

    def test_conv_bias_stride_pad(self, tmp_path):
        kernel = np.ones((1, 1, 3, 3), dtype=np.float32)
        bias = np.array([10.0], dtype=np.float32)
        ex = _executor(
            tmp_path,
            [w.node("Conv", ["x", "w0", "b0"], ["y"], kernel_shape=[3, 3],
                    strides=[2, 2], pads=[1, 1, 1, 1])],
            {"w0": kernel, "b0": bias}, [1, 1, 4, 4],
        )
        out = ex.run(np.ones((1, 1, 4, 4), dtype=np.float32))
        # top-left window covers 2x2 valid cells, center window 3x3
        assert out.shape == (1, 1, 2, 2)
        np.testing.assert_array_equal(out[0, 0], [[14.0, 16.0], [16.0, 19.0]])

    def test_maxpool(self, tmp_path):
        ex = _executor(
            tmp_path,
            [w.node("MaxPool", ["x"], ["y"], kernel_shape=[2, 2], strides=[2, 2])],
            {}, [1, 1, 4, 4],
        )
        x = np.arange(16, dtype=np.float32).reshape(1, 1, 4, 4)
        np.testing.assert_array_equal(ex.run(x)[0, 0], [[5.0, 7.0], [13.0, 15.0]])

    def test_maxpool_ceil_mode_overhang(self, tmp_path):
        # 5 wide, kernel 2, stride 2: floor gives 2 windows, ceil gives 3
        ex = _executor(
            tmp_path,
            [w.node("MaxPool", ["x"], ["y"], kernel_shape=[2, 2], strides=[2, 2],
                    ceil_mode=1)],
            {}, [1, 1, 5, 5],
        )
        x = np.arange(25, dtype=np.float32).reshape(1, 1, 5, 5)
        out = ex.run(x)
        assert out.shape == (1, 1, 3, 3)
        # last column/row windows see only the in-bounds cells
        np.testing.assert_array_equal(
            out[0, 0], [[6.0, 8.0, 9.0], [16.0, 18.0, 19.0], [21.0, 23.0, 24.0]]
        )

    def test_avgpool(self, tmp_path):
        ex = _executor(
            tmp_path,
            [w.node("AveragePool", ["x"], ["y"], kernel_shape=[2, 2], strides=[1, 1])],
            {}, [1, 1, 3, 3],
        )
        x = np.arange(9, dtype=np.float32).reshape(1, 1, 3, 3)
        np.testing.assert_array_equal(ex.run(x)[0, 0], [[2.0, 3.0], [5.0, 6.0]])

    def test_avgpool_padded_rejected(self, tmp_path):
        ex = _executor(
            tmp_path,
            [w.node("AveragePool", ["x"], ["y"], kernel_shape=[2, 2],
                    pads=[1, 1, 1, 1])],
            {}, [1, 1, 3, 3],
        )
        with pytest.raises(GraphExecError, match="padded AveragePool"):
            ex.run(np.zeros((1, 1, 3, 3), dtype=np.float32))

    def test_global_average_pool(self, tmp_path):
        ex = _executor(
            tmp_path, [w.node("GlobalAveragePool", ["x"], ["y"])], {}, [1, 2, 2, 2]
        )
        x = np.arange(8, dtype=np.float32).reshape(1, 2, 2, 2)
        out = ex.run(x)
        assert out.shape == (1, 2, 1, 1)
        np.testing.assert_array_equal(out.reshape(2), [1.5, 5.5])

    def test_batchnorm(self, tmp_path):
        scale = np.array([2.0], dtype=np.float32)
        bias = np.array([1.0], dtype=np.float32)
        mean = np.array([3.0], dtype=np.float32)
        var = np.array([4.0], dtype=np.float32)
        ex = _executor(
            tmp_path,
            [w.node("BatchNormalization", ["x", "s", "b", "m", "v"], ["y"],
                    epsilon=0.0)],
            {"s": scale, "b": bias, "m": mean, "v": var}, [1, 1, 1, 2],
        )
        out = ex.run(np.array([3.0, 5.0], dtype=np.float32).reshape(1, 1, 1, 2))
        # (x - 3) / 2 * 2 + 1
        np.testing.assert_allclose(out.reshape(2), [1.0, 3.0], rtol=1e-6)

    def test_add_and_concat(self, tmp_path):
        c = np.full((1, 2), 10.0, dtype=np.float32)
        nodes = [
            w.node("Add", ["x", "c0"], ["a"]),
            w.node("Concat", ["a", "c0"], ["y"], axis=1),
        ]
        ex = _executor(tmp_path, nodes, {"c0": c}, [1, 2])
        out = ex.run(np.array([[1.0, 2.0]], dtype=np.float32))
        np.testing.assert_array_equal(out, [[11.0, 12.0, 10.0, 10.0]])

    def test_flatten(self, tmp_path):
        ex = _executor(tmp_path, [w.node("Flatten", ["x"], ["y"], axis=1)],
                       {}, [2, 2, 3])
        out = ex.run(np.zeros((2, 2, 3), dtype=np.float32))
        assert out.shape == (2, 6)

    def test_reshape_zero_copies_dim(self, tmp_path):
        shp = np.array([0, -1], dtype=np.int64)
        ex = _executor(tmp_path, [w.node("Reshape", ["x", "shp"], ["y"])],
                       {"shp": shp}, [2, 3, 4])
        out = ex.run(np.zeros((2, 3, 4), dtype=np.float32))
        assert out.shape == (2, 12)

    def test_gemm_trans_b_alpha_beta(self, tmp_path):
        b = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], dtype=np.float32)
        c = np.array([100.0, 200.0, 300.0], dtype=np.float32)
        ex = _executor(
            tmp_path,
            [w.node("Gemm", ["x", "b0", "c0"], ["y"], transB=1, alpha=2.0, beta=0.5)],
            {"b0": b, "c0": c}, [1, 2],
        )
        out = ex.run(np.array([[1.0, 2.0]], dtype=np.float32))
        np.testing.assert_allclose(out, [[52.0, 104.0, 156.0]], rtol=1e-6)

    def test_dropout_is_identity(self, tmp_path):
        ex = _executor(tmp_path, [w.node("Dropout", ["x"], ["y"])], {}, [1, 3])
        x = np.array([[1.0, -2.0, 3.0]], dtype=np.float32)
        np.testing.assert_array_equal(ex.run(x), x)


class TestExecutorErrors:
    def test_unsupported_op(self, tmp_path):
        ex = _executor(tmp_path, [w.node("Softmax", ["x"], ["y"])], {}, [1, 3])
        with pytest.raises(GraphExecError, match="unsupported op"):
            ex.run(np.zeros((1, 3), dtype=np.float32))

    def test_missing_tensor(self, tmp_path):
        ex = _executor(tmp_path, [w.node("Add", ["x", "ghost"], ["y"])], {}, [1, 3])
        with pytest.raises(GraphExecError, match="missing tensor"):
            ex.run(np.zeros((1, 3), dtype=np.float32))

    def test_output_never_produced(self, tmp_path):
        ex = _executor(tmp_path, [w.node("Relu", ["x"], ["h"])], {}, [1, 3],
                       output="y")
        with pytest.raises(GraphExecError, match="never produced"):
            ex.run(np.zeros((1, 3), dtype=np.float32))


class TestToyGraph:
    def test_end_to_end_shapes_and_float32(self, tmp_path):
        path = tmp_path / "toy.onnx"
        w.toy_feature_graph(path, out_dim=12, seed=0)
        ex = GraphExecutor.from_file(str(path))
        out = ex.run(np.zeros((2, 3, 224, 224), dtype=np.float32))
        assert out.shape == (2, 12)
        assert out.dtype == np.float32

    def test_deterministic(self, tmp_path):
        path = tmp_path / "toy.onnx"
        w.toy_feature_graph(path, out_dim=6, seed=1)
        ex = GraphExecutor.from_file(str(path))
        x = np.random.default_rng(0).standard_normal((1, 3, 224, 224))
        np.testing.assert_array_equal(ex.run(x), ex.run(x))
