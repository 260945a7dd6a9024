import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ractdas import frame_codec as fc
from ractdas.frame_codec import (
    BadStartByte,
    BadStopByte,
    FramingError,
    LengthError,
    NonHexPayload,
    ScannerState,
    TagId,
    decode_frame,
    decode_uart,
    encode_frame,
    encode_uart,
    scan_stream,
)

REFERENCE_FRAME = bytes([0x0A, 0x30, 0x46, 0x30, 0x31, 0x38, 0x34,
                         0x46, 0x30, 0x37, 0x41, 0x0D])


def oracle_uart(data: bytes) -> str:
    """Independent 8N1 expansion: reverse each byte's MSB-first bits, wrap 0..1."""
    return "".join("0" + f"{b:08b}"[::-1] + "1" for b in data)


# --- TagId -------------------------------------------------------------------


def test_tagid_normalizes_lowercase():
    assert TagId("0f0184f07a").digits == "0F0184F07A"


@pytest.mark.parametrize("bad", ["", "0F0184F07", "0F0184F07AB", "0F0184F07G"])
def test_tagid_rejects_malformed(bad):
    with pytest.raises(ValueError):
        TagId(bad)


def test_tagid_int_round_trip():
    assert TagId.from_int(0x0F0184F07A) == TagId("0F0184F07A")
    assert TagId("0F0184F07A").value == 0x0F0184F07A


# --- frames -------------------------------------------------------------------


def test_encode_frame_reference_vector():
    assert encode_frame(TagId("0F0184F07A")) == REFERENCE_FRAME


def test_encode_frame_boundary_tags():
    assert encode_frame(TagId("0000000000")) == bytes([0x0A] + [0x30] * 10 + [0x0D])
    assert encode_frame(TagId("FFFFFFFFFF")) == bytes([0x0A] + [0x46] * 10 + [0x0D])


def test_decode_frame_reference_vector():
    assert decode_frame(REFERENCE_FRAME) == TagId("0F0184F07A")


def test_decode_frame_swapped_delimiters():
    swapped = bytes([0x0D]) + REFERENCE_FRAME[1:11] + bytes([0x0A])
    with pytest.raises(BadStartByte):
        decode_frame(swapped)


def test_decode_frame_bad_stop():
    with pytest.raises(BadStopByte):
        decode_frame(REFERENCE_FRAME[:11] + b"\x00")


def test_decode_frame_non_hex_payload():
    bad = bytearray(REFERENCE_FRAME)
    bad[3] = ord("G")
    with pytest.raises(NonHexPayload):
        decode_frame(bytes(bad))


def test_decode_frame_rejects_lowercase_hex_on_wire():
    bad = bytearray(REFERENCE_FRAME)
    bad[2] = ord("f")  # wire carries uppercase only
    with pytest.raises(NonHexPayload):
        decode_frame(bytes(bad))


def test_decode_frame_wrong_length():
    with pytest.raises(LengthError):
        decode_frame(REFERENCE_FRAME + b"\x00")


@given(st.integers(min_value=0, max_value=(1 << 40) - 1))
def test_frame_round_trip(value):
    tag = TagId.from_int(value)
    assert decode_frame(encode_frame(tag)) == tag


# --- UART 8N1 ----------------------------------------------------------------


def test_encode_uart_empty():
    assert encode_uart(b"") == ""


def test_encode_uart_single_byte_oracle():
    # 0x0A = 00001010 MSB-first; LSB-first data field is 01010000
    assert encode_uart(b"\x0a") == "0010100001"
    assert encode_uart(b"\x0a") == oracle_uart(b"\x0a")


def test_full_frame_is_120_bits_and_matches_oracle():
    bits = encode_uart(REFERENCE_FRAME)
    assert len(bits) == 120
    assert bits == oracle_uart(REFERENCE_FRAME)


def test_decode_uart_single_group():
    assert decode_uart("0010100001") == b"\x0a"


def test_decode_uart_length_error():
    with pytest.raises(LengthError):
        decode_uart("00101000")


def test_decode_uart_framing_error_reports_group():
    bits = encode_uart(b"\x01\x02\x03")
    broken = bits[:20] + "1" + bits[21:]  # third group start bit
    with pytest.raises(FramingError) as exc:
        decode_uart(broken)
    assert exc.value.group_index == 2


@given(st.binary(max_size=64))
def test_uart_round_trip(data):
    bits = encode_uart(data)
    assert len(bits) == 10 * len(data)
    assert all(bits[i] == "0" and bits[i + 9] == "1"
               for i in range(0, len(bits), 10))
    assert decode_uart(bits) == data


@given(st.binary(max_size=32))
def test_uart_matches_independent_oracle(data):
    assert encode_uart(data) == oracle_uart(data)


@settings(max_examples=50)
@given(st.integers(min_value=0, max_value=(1 << 40) - 1),
       st.integers(min_value=0, max_value=119))
def test_single_bit_flip_never_aliases(value, position):
    tag = TagId.from_int(value)
    bits = encode_uart(encode_frame(tag))
    flipped = (bits[:position]
               + ("1" if bits[position] == "0" else "0")
               + bits[position + 1:])
    try:
        frame = decode_uart(flipped)
    except FramingError:
        return
    assert frame != encode_frame(tag)
    try:
        decoded = decode_frame(frame)
    except fc.FrameError:
        return
    assert decoded != tag


# --- stream scanner -----------------------------------------------------------


def test_scan_two_back_to_back_frames():
    other = encode_frame(TagId("1234567890"))
    tags, state, errors = scan_stream(REFERENCE_FRAME + other)
    assert tags == [TagId("0F0184F07A"), TagId("1234567890")]
    assert state.pending == b"" and not errors


def test_scan_split_frame_across_calls():
    tags, state, errors = scan_stream(REFERENCE_FRAME[:6])
    assert tags == [] and not errors
    assert state.pending == REFERENCE_FRAME[:6]
    tags, state, errors = scan_stream(REFERENCE_FRAME[6:], state)
    assert tags == [TagId("0F0184F07A")]
    assert state.pending == b""


def test_scan_skips_garbage_and_counts():
    tags, state, errors = scan_stream(b"\xff" + REFERENCE_FRAME)
    assert tags == [TagId("0F0184F07A")]
    assert state.skipped == 1
    assert not errors


def test_scan_malformed_candidate_resynchronizes():
    noise = bytes([0x0A, ord("G")])  # start byte then non-hex
    tags, state, errors = scan_stream(noise + REFERENCE_FRAME)
    assert tags == [TagId("0F0184F07A")]
    assert len(errors) == 1
    assert errors[0].reason == "non-hex payload byte"


def test_scan_premature_start_inside_candidate_recovers_frame():
    # candidate opens, then the real frame's 0x0A appears in its payload slot
    data = bytes([0x0A, 0x30, 0x31]) + REFERENCE_FRAME
    tags, state, errors = scan_stream(data)
    assert tags == [TagId("0F0184F07A")]
    assert len(errors) == 1
    assert errors[0].reason == "premature delimiter in payload"


def test_scanner_retains_at_most_twelve_bytes():
    tags, state, errors = scan_stream(REFERENCE_FRAME[:11])
    assert len(state.pending) <= 12


@given(st.lists(st.integers(min_value=0, max_value=(1 << 40) - 1),
                max_size=6),
       st.data())
def test_scan_frames_with_garbage_between(values, data):
    non_start = st.binary(max_size=6).filter(lambda b: 0x0A not in b)
    stream = data.draw(non_start)
    expected = []
    for v in values:
        tag = TagId.from_int(v)
        expected.append(tag)
        stream += encode_frame(tag) + data.draw(non_start)
    split = data.draw(st.integers(min_value=0, max_value=len(stream)))
    tags1, state, _ = scan_stream(stream[:split])
    tags2, state, _ = scan_stream(stream[split:], state)
    assert tags1 + tags2 == expected


def test_scan_brute_force_split_points_agree():
    stream = b"\xff" + REFERENCE_FRAME + b"\x01\x02" + encode_frame(TagId("ABCDEF0123"))
    expected = [TagId("0F0184F07A"), TagId("ABCDEF0123")]
    for split in range(len(stream) + 1):
        tags1, state, _ = scan_stream(stream[:split])
        tags2, _, _ = scan_stream(stream[split:], state)
        assert tags1 + tags2 == expected, f"split at {split}"
