"""
Binary file formats.

All integers and floats are little-endian.

- feature map (GPSF): magic "GPSF", uint32 W, H, D, then W*H*D float32,
  location-major (x over W, then y over H) then channel.
- part masks (GPSM): magic "GPSM", uint32 N_P, W, H, then N_P*W*H float32.
- checkpoint (GPSC): magic "GPSC", 32-byte schema hash (sha256), uint32
  number of tensors, then per tensor uint32 name length, utf-8 name,
  uint32 ndim, ndim uint32 dims, float64 values.
- signatures (GPSS): magic "GPSS", uint32 count, uint32 dim, then per
  entry int64 identity, int64 camera, uint8 junk flag, dim float64.
"""
import struct
from collections import namedtuple
from collections import OrderedDict

import numpy as np

from .common import FormatError

FEATURE_MAGIC = b'GPSF'
MASK_MAGIC = b'GPSM'
CHECKPOINT_MAGIC = b'GPSC'
SIGNATURE_MAGIC = b'GPSS'

SignatureSet = namedtuple('SignatureSet', ['vectors', 'identities', 'cameras', 'junk'])


def _read_exact(fd, n, filename):
    data = fd.read(n)
    if len(data) != n:
        raise FormatError('unexpected end of file in {}'.format(filename))
    return data


def _check_magic(fd, magic, filename):
    got = fd.read(len(magic))
    if got != magic:
        raise FormatError('{} is not a {} file (magic {!r})'.format(filename, magic.decode(), got))


def _write_array3(filename, magic, array):
    array = np.ascontiguousarray(array, dtype='<f4')
    with open(filename, 'wb') as fd:
        fd.write(magic)
        fd.write(struct.pack('<3I', *array.shape))
        fd.write(array.tobytes())


def _read_array3(filename, magic):
    with open(filename, 'rb') as fd:
        _check_magic(fd, magic, filename)
        shape = struct.unpack('<3I', _read_exact(fd, 12, filename))
        count = int(np.prod(shape))
        data = _read_exact(fd, 4 * count, filename)
        if fd.read(1):
            raise FormatError('trailing bytes in {}'.format(filename))
    return np.frombuffer(data, dtype='<f4').reshape(shape).astype(np.float64)


def write_feature_map(filename, F):
    """write a (W, H, D) feature map"""
    if np.ndim(F) != 3:
        raise FormatError('a feature map must be 3D, got shape {}'.format(np.shape(F)))
    _write_array3(filename, FEATURE_MAGIC, F)


def read_feature_map(filename):
    """read a feature map as a float64 array (W, H, D)"""
    return _read_array3(filename, FEATURE_MAGIC)


def write_masks(filename, masks):
    """write (N_P, W, H) part masks"""
    if np.ndim(masks) != 3:
        raise FormatError('masks must be 3D, got shape {}'.format(np.shape(masks)))
    _write_array3(filename, MASK_MAGIC, masks)


def read_masks(filename):
    return _read_array3(filename, MASK_MAGIC)


def save_checkpoint(filename, tensors, schema_hash):
    """
    Parameters
    ----------

    filename : str
    tensors : ordered dict name -> numpy array
    schema_hash : bytes of length 32
    """
    if len(schema_hash) != 32:
        raise FormatError('schema hash must be 32 bytes')
    with open(filename, 'wb') as fd:
        fd.write(CHECKPOINT_MAGIC)
        fd.write(schema_hash)
        fd.write(struct.pack('<I', len(tensors)))
        for name, value in tensors.items():
            value = np.ascontiguousarray(value, dtype='<f8')
            encoded = name.encode('utf-8')
            fd.write(struct.pack('<I', len(encoded)))
            fd.write(encoded)
            fd.write(struct.pack('<I', value.ndim))
            fd.write(struct.pack('<{}I'.format(value.ndim), *value.shape))
            fd.write(value.tobytes())


def load_checkpoint(filename):
    """
    Returns
    -------

    tuple (ordered dict name -> float64 array, schema hash bytes)
    """
    tensors = OrderedDict()
    with open(filename, 'rb') as fd:
        _check_magic(fd, CHECKPOINT_MAGIC, filename)
        schema_hash = _read_exact(fd, 32, filename)
        count, = struct.unpack('<I', _read_exact(fd, 4, filename))
        for _ in range(count):
            length, = struct.unpack('<I', _read_exact(fd, 4, filename))
            name = _read_exact(fd, length, filename).decode('utf-8')
            ndim, = struct.unpack('<I', _read_exact(fd, 4, filename))
            shape = struct.unpack('<{}I'.format(ndim), _read_exact(fd, 4 * ndim, filename))
            size = int(np.prod(shape))
            data = _read_exact(fd, 8 * size, filename)
            tensors[name] = np.frombuffer(data, dtype='<f8').reshape(shape).copy()
    return tensors, schema_hash


def write_signatures(filename, signatures):
    """write a SignatureSet"""
    vectors = np.ascontiguousarray(signatures.vectors, dtype='<f8')
    count, dim = vectors.shape
    with open(filename, 'wb') as fd:
        fd.write(SIGNATURE_MAGIC)
        fd.write(struct.pack('<II', count, dim))
        for i in range(count):
            fd.write(struct.pack('<qqB', int(signatures.identities[i]), int(signatures.cameras[i]),
                                 int(bool(signatures.junk[i]))))
            fd.write(vectors[i].tobytes())


def read_signatures(filename):
    with open(filename, 'rb') as fd:
        _check_magic(fd, SIGNATURE_MAGIC, filename)
        count, dim = struct.unpack('<II', _read_exact(fd, 8, filename))
        vectors = np.empty((count, dim))
        identities = np.empty(count, dtype=np.int64)
        cameras = np.empty(count, dtype=np.int64)
        junk = np.empty(count, dtype=bool)
        for i in range(count):
            identities[i], cameras[i], flag = struct.unpack('<qqB', _read_exact(fd, 17, filename))
            junk[i] = bool(flag)
            vectors[i] = np.frombuffer(_read_exact(fd, 8 * dim, filename), dtype='<f8')
    return SignatureSet(vectors=vectors, identities=identities, cameras=cameras, junk=junk)
