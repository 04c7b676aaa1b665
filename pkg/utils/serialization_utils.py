"""
JSON helpers for bit-exact archival of arrays and reals
"""

import json
import logging
import os

import numpy as np

from utils.exceptions import InputError

logger = logging.getLogger(__name__)


def encode_real(value, hex_floats=True):
    """Encode a real as a hex-float string (exact) or a plain float"""
    value = float(value)
    return value.hex() if hex_floats else value


def decode_real(value):
    """Decode a real written by encode_real (hex string or number)"""
    if isinstance(value, str):
        try:
            return float.fromhex(value)
        except ValueError:
            return float(value)
    return float(value)


def encode_array(array, hex_floats=True):
    """Encode an array as nested lists, row-major"""
    array = np.asarray(array, dtype=float)
    if array.ndim == 0:
        return encode_real(array, hex_floats)
    return [encode_array(row, hex_floats) for row in array]


def decode_array(data):
    """Decode nested lists written by encode_array"""
    if isinstance(data, list):
        return np.array([decode_array(item) for item in data], dtype=float)
    return decode_real(data)


def dumps_canonical(payload):
    """Canonical JSON text: sorted keys, fixed separators"""
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False)


def write_json(payload, file_path):
    """
    Write a JSON document

    Args:
        payload (dict): JSON-serialisable payload
        file_path (str): Output file path
    """
    try:
        directory = os.path.dirname(file_path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(file_path, "w", encoding="utf-8") as f:
            f.write(dumps_canonical(payload))
            f.write("\n")
        logger.info(f"Wrote {file_path}")
    except Exception as e:
        logger.error(f"Error writing JSON file: {str(e)}")
        raise


def read_json(file_path):
    """
    Read a JSON document

    Args:
        file_path (str): Input file path

    Returns:
        dict: Parsed document
    """
    if not os.path.exists(file_path):
        raise FileNotFoundError(f"File not found: {file_path}")
    try:
        with open(file_path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        logger.error(f"Error parsing JSON file {file_path}: {str(e)}")
        raise InputError(f"Malformed JSON in {file_path}: {e}") from e
