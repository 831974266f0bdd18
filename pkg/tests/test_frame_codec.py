import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wsncloud import frame_codec as fc


def brute_force_checksum(data):
    # the one byte value that brings the total to 0xFF mod 256
    return next(c for c in range(256) if (sum(data) + c) % 256 == 0xFF)


@pytest.mark.parametrize(
    "data, expected",
    [
        (b"\x00", 0xFF),
        (b"\x92\x00", 0x6D),
        (b"\xff\x01", 0xFF),
    ],
)
def test_compute_checksum_examples(data, expected):
    assert fc.compute_checksum(data) == expected
    assert brute_force_checksum(data) == expected


def test_compute_checksum_rejects_empty():
    with pytest.raises(fc.InvalidFrame):
        fc.compute_checksum(b"")


@pytest.mark.parametrize(
    "data, checksum, ok",
    [(b"\x00", 0xFF, True), (b"\x92\x00", 0x6D, True), (b"\x92\x00", 0x6E, False)],
)
def test_verify_checksum(data, checksum, ok):
    assert fc.verify_checksum(data, checksum) is ok


def test_encode_examples():
    assert fc.encode_frame(fc.ApiFrame(b"\x00"), escaped=False) == bytes([0x7E, 0x00, 0x01, 0x00, 0xFF])
    assert fc.encode_frame(fc.ApiFrame(b"\x7e"), escaped=True) == bytes([0x7E, 0x00, 0x01, 0x7D, 0x5E, 0x81])


def test_escaping_applies_to_length_and_checksum_too():
    # 0x11 bytes of data: the length byte itself must be escaped
    frame = fc.ApiFrame(bytes(range(1, 0x12)))
    wire = fc.encode_frame(frame, escaped=True)
    assert wire[:4] == bytes([0x7E, 0x00, 0x7D, 0x31])
    assert fc.decode_frame(wire, escaped=True) == frame


def test_decode_examples():
    assert fc.decode_frame(bytes([0x7E, 0x00, 0x01, 0x00, 0xFF])).frame_data == b"\x00"
    with pytest.raises(fc.TruncatedFrame):
        fc.decode_frame(bytes([0x7E, 0x00, 0x02, 0x00]))
    with pytest.raises(fc.ChecksumMismatch) as err:
        fc.decode_frame(bytes([0x7E, 0x00, 0x01, 0x00, 0x00]))
    assert (err.value.expected, err.value.found) == (0xFF, 0x00)
    assert str(err.value) == "checksum-mismatch expected=FF found=00"


def test_decode_skips_leading_noise():
    assert fc.decode_frame(b"\x01\x02\xaa" + bytes([0x7E, 0x00, 0x01, 0x00, 0xFF])).frame_data == b"\x00"


def test_decode_without_delimiter():
    with pytest.raises(fc.NoStartDelimiter):
        fc.decode_frame(b"\x00\x01\x02")


def test_decode_truncated_escape():
    with pytest.raises(fc.TruncatedFrame):
        fc.decode_frame(bytes([0x7E, 0x00, 0x01, 0x7D]), escaped=True)


def test_apiframe_length_bounds():
    with pytest.raises(fc.InvalidFrame):
        fc.ApiFrame(b"")
    with pytest.raises(fc.InvalidFrame):
        fc.ApiFrame(bytes(0x10000))
    assert fc.ApiFrame(bytes(0xFFFF)).length == 0xFFFF


def test_iter_frames_resyncs_after_bad_frame():
    good = fc.encode_frame(fc.ApiFrame(b"\x92\x01"))
    bad = bytes([0x7E, 0x00, 0x01, 0x00, 0x00])
    out = list(fc.iter_frames(b"\x55" + good + bad + good))
    assert [type(x) for x in out] == [fc.ApiFrame, fc.ChecksumMismatch, fc.ApiFrame]


frames = st.binary(min_size=1, max_size=300).map(fc.ApiFrame)


@settings(max_examples=500)
@given(frames, st.booleans())
def test_roundtrip_property(frame, escaped):
    assert fc.decode_frame(fc.encode_frame(frame, escaped), escaped) == frame


@settings(max_examples=300)
@given(frames)
def test_escaped_wire_has_no_raw_delimiter_after_start(frame):
    wire = fc.encode_frame(frame, escaped=True)
    assert wire[0] == 0x7E
    assert 0x7E not in wire[1:]
    for special in (0x11, 0x13):
        assert special not in wire[1:]


@settings(max_examples=300)
@given(st.binary(min_size=1, max_size=200))
def test_checksum_algebra(data):
    c = fc.compute_checksum(data)
    assert c == brute_force_checksum(data)
    assert fc.verify_checksum(data, c)


def test_every_single_byte_corruption_detected():
    rng = random.Random(11)
    for _ in range(100):
        data = bytes(rng.randrange(256) for _ in range(rng.randint(1, 40)))
        c = fc.compute_checksum(data)
        for i in range(len(data)):
            for delta in range(1, 256):
                corrupt = bytearray(data)
                corrupt[i] = (corrupt[i] + delta) % 256
                assert not fc.verify_checksum(bytes(corrupt), c)


# I/O sample payloads

NODE_ADDR = 0x0013A200409C2679


def hand_built_io_payload(addr64, addr16, amask, values, dmask=0, dsamples=0):
    out = [0x92] + list(addr64.to_bytes(8, "big")) + list(addr16.to_bytes(2, "big"))
    out += [0x01, 0x01] + list(dmask.to_bytes(2, "big")) + [amask]
    if dmask:
        out += list(dsamples.to_bytes(2, "big"))
    for v in values:
        out += [v >> 8, v & 0xFF]
    return bytes(out)


def test_parse_io_sample_example():
    payload = hand_built_io_payload(NODE_ADDR, 0x1234, 0b11, [512, 937])
    sample = fc.parse_io_sample(payload)
    assert sample.source_addr64 == NODE_ADDR
    assert sample.source_addr16 == 0x1234
    assert sample.analog() == {0: 512, 1: 937}
    assert fc.serialize_io_sample(sample) == payload


def test_parse_io_sample_no_analog():
    sample = fc.parse_io_sample(hand_built_io_payload(NODE_ADDR, 0xFFFE, 0, []))
    assert sample.analog_values == ()


def test_parse_io_sample_missing_analog_bytes():
    with pytest.raises(fc.MalformedPayload):
        fc.parse_io_sample(hand_built_io_payload(NODE_ADDR, 0xFFFE, 0b1, []))


def test_parse_io_sample_with_digital_block():
    payload = hand_built_io_payload(NODE_ADDR, 1, 0b1, [5], dmask=0x0C00, dsamples=0x0400)
    sample = fc.parse_io_sample(payload)
    assert (sample.digital_mask, sample.digital_samples, sample.analog_values) == (0x0C00, 0x0400, (5,))


def test_parse_io_sample_wrong_type():
    with pytest.raises(fc.WrongFrameType):
        fc.parse_io_sample(b"\x17" + bytes(20))


def test_io_sample_value_range():
    with pytest.raises(fc.MalformedPayload):
        fc.IoSample(NODE_ADDR, analog_mask=1, analog_values=(1024,))


io_samples = st.builds(
    lambda addr, addr16, mask, dmask, dsamp, data: fc.IoSample(
        addr, addr16, mask, tuple(data.draw(st.integers(0, 1023)) for _ in range(bin(mask).count("1"))),
        dmask, dsamp if dmask else 0,
    ),
    st.integers(0, 2**64 - 1), st.integers(0, 0xFFFF), st.integers(0, 0xFF),
    st.integers(0, 0xFFFF), st.integers(0, 0xFFFF), st.data(),
)


@settings(max_examples=300)
@given(io_samples)
def test_io_sample_roundtrip(sample):
    assert fc.parse_io_sample(fc.serialize_io_sample(sample)) == sample


# poll requests


def test_poll_request_layout():
    frame = fc.build_poll_request(fc.PollRequest(NODE_ADDR, 1))
    expected = bytes([0x17, 0x01]) + NODE_ADDR.to_bytes(8, "big") + b"\xff\xfe" + b"\x00" + b"IS"
    assert frame.frame_data == expected
    wire = fc.encode_frame(frame, escaped=False)
    assert fc.verify_checksum(wire[3:-1], wire[-1])
    assert wire[-1] == brute_force_checksum(expected)


def test_poll_requests_differ_only_in_frame_id_and_checksum():
    a = fc.encode_frame(fc.build_poll_request(fc.PollRequest(NODE_ADDR, 1)), escaped=False)
    b = fc.encode_frame(fc.build_poll_request(fc.PollRequest(NODE_ADDR, 2)), escaped=False)
    diffs = [i for i in range(len(a)) if a[i] != b[i]]
    assert diffs == [4, len(a) - 1]


def test_poll_request_unknown_addr16_placeholder():
    for addr16 in (None, 0xFFFF):
        frame = fc.build_poll_request(fc.PollRequest(NODE_ADDR, 3, addr16))
        assert frame.frame_data[10:12] == b"\xff\xfe"
    assert fc.parse_poll_request(fc.build_poll_request(fc.PollRequest(NODE_ADDR, 3, 0x0042)).frame_data).dest_addr16 == 0x42


def test_frame_id_counter_cycles_without_zero():
    counter = fc.FrameIdCounter()
    ids = [counter.next() for _ in range(600)]
    assert ids[:3] == [1, 2, 3]
    assert ids[254] == 255 and ids[255] == 1
    assert 0 not in ids
