"""
Testes de persistência: TNSR, checkpoints, bundles, datasets e renderização
"""

import json

import numpy as np
import pytest
from PIL import Image

from pabcnn.errors import (
    CheckpointVersionError,
    CorruptPayloadError,
    GeometryMismatchError,
    StorageError,
    TnsrHeaderError,
    TnsrTruncatedError,
)
from pabcnn.losses import Likelihood, LossKind
from pabcnn.nn.training import TrainConfig, train
from pabcnn.nn.unet import NetConfig, build_network, forward
from pabcnn.simulation.acoustics import ArrayGeometry
from pabcnn.simulation.phantom import GridSpec, Phantom
from pabcnn.storage import (
    DatasetStore,
    load_checkpoint,
    load_posterior,
    read_array,
    read_tnsr,
    render_db,
    save_checkpoint,
    save_posterior,
    write_pgm,
    write_tnsr,
)
from pabcnn.uncertainty import aggregate

from tests.conftest import make_stack
from tests.test_training import synthetic_data


class TestTnsr:

    def test_header_is_single_json_line(self, tmp_path):
        path = write_tnsr(tmp_path / 'a.tnsr', np.arange(6, dtype=np.float32).reshape(2, 3), {'k': 1})
        header, _, payload = path.read_bytes().partition(b'\n')
        document = json.loads(header)
        assert document['magic'] == 'TNSR1'
        assert document['dtype'] == 'f32'
        assert document['shape'] == [2, 3]
        assert len(payload) == 24

    def test_multi_map_with_meta(self, tmp_path):
        maps = {'seg': np.array([[1, 0]], dtype=np.uint8), 'image': np.array([[0.5, 0.0]])}
        write_tnsr(tmp_path / 'b.tnsr', maps, {'fraction': 0.5, 'peak': float('inf')})
        content = read_tnsr(tmp_path / 'b.tnsr')
        assert list(content.maps) == ['seg', 'image']
        assert content['seg'].dtype == np.uint8
        np.testing.assert_array_equal(content['image'], maps['image'])
        assert content.meta['peak'] == 'inf'

    def test_truncated_payload(self, tmp_path):
        path = write_tnsr(tmp_path / 'c.tnsr', np.ones(10))
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(TnsrTruncatedError):
            read_array(path)

    def test_missing_magic(self, tmp_path):
        path = tmp_path / 'd.tnsr'
        path.write_bytes(b'{"maps": []}\n')
        with pytest.raises(TnsrHeaderError):
            read_tnsr(path)

    def test_unknown_dtype(self, tmp_path):
        path = tmp_path / 'e.tnsr'
        header = {'magic': 'TNSR1', 'byte_order': 'LE',
                  'maps': [{'name': 'x', 'dtype': 'i16', 'shape': [1], 'offset': 0, 'nbytes': 2}]}
        path.write_bytes(json.dumps(header).encode() + b'\n\x00\x00')
        with pytest.raises(TnsrHeaderError):
            read_tnsr(path)

    def test_no_newline(self, tmp_path):
        path = tmp_path / 'f.tnsr'
        path.write_bytes(b'garbage')
        with pytest.raises(TnsrHeaderError):
            read_tnsr(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(StorageError) as info:
            read_tnsr(tmp_path / 'absent.tnsr')
        assert 'absent.tnsr' in str(info.value)


class TestCheckpoints:

    def test_save_load_preserves_outputs(self, tmp_path, tiny_net):
        result = train(build_network(tiny_net, 3, (8, 8)), synthetic_data(), LossKind.HYBRID_LAPLACE,
                       TrainConfig(max_epochs=2, patience=1, batch_size=4))
        ckpt = result.checkpoint
        save_checkpoint(tmp_path / 'net.tnsr', ckpt)
        loaded = load_checkpoint(tmp_path / 'net.tnsr')

        assert loaded.loss_kind is LossKind.HYBRID_LAPLACE
        assert loaded.epoch == ckpt.epoch
        assert loaded.input_shape == (8, 8)
        assert loaded.parameter_count == ckpt.parameter_count
        x = np.random.default_rng(0).normal(size=(3, 8, 8))
        np.testing.assert_array_equal(forward(loaded, x).mu2, forward(ckpt, x).mu2)

    def test_untrained_checkpoint_has_infinite_loss(self, tmp_path, tiny_net):
        save_checkpoint(tmp_path / 'init.tnsr', build_network(tiny_net, 3))
        loaded = load_checkpoint(tmp_path / 'init.tnsr')
        assert loaded.best_val_loss == float('inf')
        assert loaded.optimizer is None

    def test_version_mismatch(self, tmp_path, tiny_net):
        ckpt = build_network(tiny_net, 3)
        write_tnsr(tmp_path / 'old.tnsr', {f'param/{k}': v for k, v in ckpt.params.items()},
                   {'format': 'pabcnn-checkpoint', 'version': 0})
        with pytest.raises(CheckpointVersionError):
            load_checkpoint(tmp_path / 'old.tnsr')

    def test_truncated_checkpoint(self, tmp_path, tiny_net):
        path = save_checkpoint(tmp_path / 'net.tnsr', build_network(tiny_net, 3))
        path.write_bytes(path.read_bytes()[:-100])
        with pytest.raises(CorruptPayloadError):
            load_checkpoint(path)

    def test_config_inconsistent_with_payload(self, tmp_path, tiny_net):
        path = save_checkpoint(tmp_path / 'net.tnsr', build_network(tiny_net, 3))
        content = read_tnsr(path)
        content.meta['net_config']['base_channels'] = 4
        write_tnsr(path, content.maps, content.meta)
        with pytest.raises(CorruptPayloadError):
            load_checkpoint(path)


class TestBundles:

    def test_round_trip_with_stack(self, tmp_path):
        rng = np.random.default_rng(0)
        stack = make_stack(rng.uniform(0.5, 1.5, (3, 4, 4)), rng.uniform(0.1, 0.3, (3, 4, 4)),
                           mu1=rng.uniform(0, 1, (3, 4, 4)), loss_kind=LossKind.HYBRID_LAPLACE)
        stack = type(stack)(mu1=stack.mu1, mu2=stack.mu2, sigma=stack.sigma,
                            seeds=(2 ** 63 + 5, 1, 2), loss_kind=stack.loss_kind)
        posterior = aggregate(stack, Likelihood.LAPLACE)
        save_posterior(tmp_path / 'p.tnsr', posterior, stack, {'dataset_index': 7})

        loaded, loaded_stack, meta = load_posterior(tmp_path / 'p.tnsr')
        assert meta['dataset_index'] == 7
        assert meta['passes'] == 3
        assert loaded_stack.seeds == (2 ** 63 + 5, 1, 2)
        assert loaded.final_seg.dtype == np.uint8
        np.testing.assert_array_equal(loaded.img_unc, posterior.img_unc)

    def test_laplace_only_bundle(self, tmp_path):
        stack = make_stack(np.ones((2, 2, 2)), np.ones((2, 2, 2)), loss_kind=LossKind.LAPLACE_ONLY)
        save_posterior(tmp_path / 'q.tnsr', aggregate(stack, Likelihood.LAPLACE))
        loaded, loaded_stack, _ = load_posterior(tmp_path / 'q.tnsr')
        assert not loaded.has_segmentation
        assert loaded_stack is None

    def test_not_a_bundle(self, tmp_path):
        write_tnsr(tmp_path / 'x.tnsr', np.ones(3))
        with pytest.raises(CorruptPayloadError):
            load_posterior(tmp_path / 'x.tnsr')


class TestDatasetStore:

    def test_manifest_and_items(self, tmp_path):
        store = DatasetStore(tmp_path / 'ds')
        phantom = Phantom.from_image(np.array([[0.0, 2.0], [1.0, 0.0]]))
        store.write_phantom(3, phantom)
        store.write_manifest({'n': 10, 'grid': GridSpec().model_dump(mode='json'),
                              'geometry': ArrayGeometry().model_dump(mode='json'),
                              'splits': {'train': np.arange(8), 'val': [8], 'test': [9]}})

        reopened = DatasetStore(tmp_path / 'ds')
        assert len(reopened) == 10
        assert reopened.grid == GridSpec()
        np.testing.assert_array_equal(reopened.split('test'), [9])
        np.testing.assert_array_equal(reopened.read_phantom(3).segmentation, phantom.segmentation)
        assert reopened.phantom_path(3).name == '00003.tnsr'

    def test_incompatible_geometry(self, tmp_path):
        store = DatasetStore(tmp_path)
        store.write_manifest({'n': 10, 'grid': GridSpec().model_dump(mode='json'),
                              'geometry': ArrayGeometry().model_dump(mode='json')})
        with pytest.raises(GeometryMismatchError):
            store.check_compatible(GridSpec(), ArrayGeometry(n_elem=16))

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(StorageError):
            len(DatasetStore(tmp_path / 'nothing'))

    def test_foreign_manifest(self, tmp_path):
        (tmp_path / 'manifest.json').write_text('{"format": "other"}', encoding='utf-8')
        with pytest.raises(CorruptPayloadError):
            DatasetStore(tmp_path).manifest


class TestRendering:

    def test_db_mapping(self):
        pixels = render_db(np.array([[1.0, 0.1, 1e-4, 0.0]]), peak=1.0, dynamic_range_db=50)
        # 0 dB -> 255, -20 dB -> 153, abaixo de -50 dB -> 0
        np.testing.assert_array_equal(pixels, [[255, 153, 0, 0]])

    def test_zero_image_is_black(self):
        assert not render_db(np.zeros((2, 2))).any()

    def test_pgm_written(self, tmp_path):
        path = write_pgm(tmp_path / 'img.pgm', np.array([[1.0, 0.5], [0.25, 0.0]]))
        assert path.read_bytes().startswith(b'P5')
        with Image.open(path) as img:
            assert img.size == (2, 2)
