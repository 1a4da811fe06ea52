import numpy as np
import pytest

from core_types import Dataset
from dataset_storage import (
    DatasetStorage, format_float, load_dataset, metadata_path, read_metadata, save_dataset, write_metadata,
)
from errors import InvalidData


def test_format_float_keeps_full_precision():
    assert format_float(0.1) == '0.10000000000000001'
    assert float(format_float(np.pi)) == np.pi
    assert format_float(2.0) == '2'


def test_save_and_load_preserve_values(tmp_path, vdp_dataset):
    path = save_dataset(vdp_dataset, tmp_path / 'vdp.csv')
    loaded = load_dataset(path)
    for name in ('t', 'x', 'xdot', 'xddot', 'fext'):
        np.testing.assert_array_equal(getattr(loaded, name), getattr(vdp_dataset, name))
    assert loaded.meta == {}


def test_metadata_sidecar(tmp_path, vdp_dataset):
    path = save_dataset(vdp_dataset, tmp_path / 'vdp.csv')
    sidecar = write_metadata(path, {'system': 'van_der_pol', 'seed': 3})
    assert sidecar == metadata_path(path) == tmp_path / 'vdp.meta.json'
    assert read_metadata(path) == {'system': 'van_der_pol', 'seed': 3}
    assert load_dataset(path).meta['system'] == 'van_der_pol'


def test_missing_derivatives(tmp_path):
    t = np.linspace(0.0, 2.0 * np.pi, 401)
    path = tmp_path / 'measured.csv'
    path.write_text('t,x,fext\n' + ''.join(f"{format_float(a)},{format_float(b)},0.0\n" for a, b in zip(t, np.sin(t))))
    with pytest.raises(InvalidData, match='estimate_missing'):
        load_dataset(path)
    ds = load_dataset(path, estimate_missing=True)
    np.testing.assert_allclose(ds.xdot, np.cos(t), atol=1e-4)


@pytest.mark.parametrize('content, fragment', [
    ('', 'empty'),
    ('t,x,speed,fext\n0,0,0,0\n', 'unknown column'),
    ('t,xdot,fext\n0,0,0\n', "missing column 'x'"),
    ('t,x,fext\n0,abc,0\n', 'abc'),
])
def test_malformed_csv(tmp_path, content, fragment):
    path = tmp_path / 'bad.csv'
    path.write_text(content)
    with pytest.raises(InvalidData, match=fragment):
        load_dataset(path)


def test_missing_file(tmp_path):
    with pytest.raises(InvalidData, match='not found'):
        load_dataset(tmp_path / 'absent.csv')


def test_storage_by_name(tmp_path):
    storage = DatasetStorage(str(tmp_path / 'datasets'))
    t = np.linspace(0.0, 1.0, 6)
    ds = Dataset(t=t, x=t, xdot=np.ones(6), xddot=np.zeros(6), fext=np.zeros(6))
    storage.save('ramp', ds, {'source': 'test'})
    storage.save('flat', ds)
    assert storage.list_names() == ['flat', 'ramp']
    assert storage.exists('ramp') and not storage.exists('step')
    assert storage.load('ramp').meta == {'source': 'test'}
