"""Alignment schedule and the three data detectors."""

import numpy as np
import pytest

from scma_uplink.channel import ChannelRealization, draw_channel, snr_db_to_noise_variance, transmit
from scma_uplink.core import (
    CodebookSet,
    FactorGraph,
    build_factor_graph,
    default_codebook_set,
    index_to_bits,
)
from scma_uplink.decode import (
    McmcParams,
    active_context,
    align,
    decode_frame,
    full_context,
    indices_to_bits,
    llr_csv,
    llrs_to_bits,
    log_mpa,
    map_oracle,
    mcmc_decode,
)
from scma_uplink.seeding import spawn_rng
from scma_uplink.txchain import DelayProfile, assemble_frame, generate_pilot


@pytest.fixture(scope="module")
def graph():
    return build_factor_graph(4, 6)


@pytest.fixture(scope="module")
def books(graph):
    return default_codebook_set(graph)


def test_align_windows(graph):
    pilot_len, data_len, max_delay = 5, 3, 2
    delays = DelayProfile((0, 2, 1, 0, 2, 1), max_delay)
    schedule = align(delays, pilot_len, data_len, graph)
    assert schedule.n_samples == pilot_len + data_len + max_delay
    for n in range(schedule.n_samples):
        for j in range(graph.n_users):
            d = delays[j]
            in_pilot = d <= n < d + pilot_len
            in_data = d + pilot_len <= n < d + pilot_len + data_len
            pilot_users = dict(schedule.pilot_entries(n))
            data_users = dict(schedule.data_entries(n))
            assert (j in pilot_users) == in_pilot
            assert (j in data_users) == in_data
            if in_pilot:
                assert pilot_users[j] == n - d
            if in_data:
                assert data_users[j] == n - d - pilot_len


def test_single_user_llr_signs(graph, books):
    channel = draw_channel("awgn", graph, 0.0, spawn_rng(0))
    context = active_context((2,), np.zeros(graph.n_res, dtype=complex), books, channel)
    for m in range(books.size):
        result = log_mpa(context.effective[0, m], context, 0.0)
        bits = index_to_bits(m, books.bits_per_symbol)
        decided = (result.llrs[0] < 0).astype(int)
        assert np.array_equal(decided, bits)


def test_oracle_recovers_noiseless_symbols(graph, books):
    rng = spawn_rng(1)
    channel = draw_channel("rayleigh", graph, 0.0, rng)
    context = full_context(books, channel)
    indices = rng.integers(0, books.size, (16, graph.n_users))
    observed = context.effective[np.arange(graph.n_users), indices].sum(axis=1)
    result = map_oracle(observed, context, 0.0)
    decided = (result.llrs < 0).astype(int)
    truth = indices_to_bits(indices, books.bits_per_symbol).reshape(decided.shape)
    assert np.array_equal(decided, truth)


def test_log_mpa_matches_oracle_off_cycles(graph, books):
    # users 0 and 5 share no RE, so their sub-graph is a forest
    rng = spawn_rng(2)
    nv = snr_db_to_noise_variance(10.0)
    channel = draw_channel("awgn", graph, nv, rng)
    context = active_context((0, 5), np.zeros(graph.n_res, dtype=complex), books, channel)
    indices = rng.integers(0, books.size, (64, 2))
    clean = context.effective[np.arange(2), indices].sum(axis=1)
    noise = rng.standard_normal((64, graph.n_res)) + 1j * rng.standard_normal((64, graph.n_res))
    observed = clean + np.sqrt(nv / 2) * noise
    a = log_mpa(observed, context, nv, iterations=6)
    b = map_oracle(observed, context, nv)
    assert np.array_equal(a.llrs >= 0, b.llrs >= 0)


def test_mcmc_two_word_llr_matches_hand_value():
    # one user, one RE, codewords {+1, -1}, y = 0.9, unit noise:
    # scores are -|y -/+ 1|^2 = -0.01 and -3.61, so the bit LLR is 3.6.
    graph = FactorGraph(np.array([[1, 1]]))
    words = np.array([[[1.0 + 0j], [-1.0 + 0j]], [[1j], [-1j]]])
    books = CodebookSet(words, graph)
    channel = ChannelRealization(np.ones((1, 2), dtype=complex), "awgn", 1.0)
    context = active_context((0,), np.zeros(1, dtype=complex), books, channel)
    result = mcmc_decode(np.array([0.9 + 0j]), context, 1.0, McmcParams(sweeps=3, chains=2, seed=0))
    assert result.llrs[0, 0] == pytest.approx(3.6, abs=1e-9)


def test_mcmc_is_seed_deterministic(graph, books):
    rng = spawn_rng(3)
    nv = snr_db_to_noise_variance(8.0)
    channel = draw_channel("awgn", graph, nv, rng)
    context = full_context(books, channel)
    indices = rng.integers(0, books.size, (32, graph.n_users))
    clean = context.effective[np.arange(graph.n_users), indices].sum(axis=1)
    noise = rng.standard_normal((32, graph.n_res)) + 1j * rng.standard_normal((32, graph.n_res))
    observed = clean + np.sqrt(nv / 2) * noise
    params = McmcParams(sweeps=5, chains=2, seed=77)
    first = mcmc_decode(observed, context, nv, params)
    second = mcmc_decode(observed, context, nv, params)
    assert np.array_equal(first.llrs, second.llrs)


def test_mcmc_requires_noise(graph, books):
    channel = draw_channel("awgn", graph, 0.0, spawn_rng(4))
    context = full_context(books, channel)
    with pytest.raises(ValueError):
        mcmc_decode(np.zeros(graph.n_res, dtype=complex), context, 0.0, McmcParams())


def _frame_scene(graph, books, seed, data_len, noise_variance, max_delay=6):
    rng = spawn_rng(seed)
    head_len = 8
    truth = DelayProfile(tuple(int(v) for v in rng.integers(0, max_delay + 1, 6)), max_delay)
    pilots = np.stack(
        [generate_pilot(head_len, max_delay, 1.0, rng) for _ in range(6)]
    )
    indices = rng.integers(0, books.size, (6, data_len))
    frames = [
        assemble_frame(pilots[j], books.user(j)[indices[j]], graph, j) for j in range(6)
    ]
    channel = draw_channel("awgn", graph, noise_variance, rng)
    received = transmit(frames, truth, channel, rng)
    return truth, pilots, indices, channel, received


def test_decode_frame_noiseless_round_trip(graph, books):
    truth, pilots, indices, channel, received = _frame_scene(graph, books, 5, 12, 0.0)
    table = decode_frame(received, truth, pilots, 12, graph, books, channel, "log_mpa")
    decided = llrs_to_bits(table)
    assert np.array_equal(decided, indices_to_bits(indices, books.bits_per_symbol))


def test_decode_frame_mcmc_high_snr(graph, books):
    nv = snr_db_to_noise_variance(30.0)
    truth, pilots, indices, channel, received = _frame_scene(graph, books, 6, 10, nv)
    table = decode_frame(
        received, truth, pilots, 10, graph, books, channel, "mcmc",
        mcmc=McmcParams(sweeps=12, chains=4, seed=9),
    )
    decided = llrs_to_bits(table)
    assert np.array_equal(decided, indices_to_bits(indices, books.bits_per_symbol))


def test_decode_frame_rejects_bad_detector(graph, books):
    truth, pilots, _, channel, received = _frame_scene(graph, books, 7, 4, 0.0)
    with pytest.raises(ValueError):
        decode_frame(received, truth, pilots, 4, graph, books, channel, "viterbi")


def test_llr_sign_convention():
    from scma_uplink.decode import LlrTable

    table = LlrTable(np.array([[[2.5, -1.0]], [[0.0, 3.0]]]))
    bits = llrs_to_bits(table)
    # non-negative LLR decides bit 0
    assert bits.tolist() == [[0, 1], [0, 0]]


def test_indices_to_bits_layout():
    out = indices_to_bits(np.array([[2, 1]]), 2)
    assert out.tolist() == [[1, 0, 0, 1]]


def test_llr_csv_layout(graph, books):
    truth, pilots, _, channel, received = _frame_scene(graph, books, 8, 3, 0.0)
    table = decode_frame(received, truth, pilots, 3, graph, books, channel, "log_mpa")
    lines = llr_csv(table).strip().splitlines()
    assert lines[0] == "user,symbol,bit,llr"
    assert len(lines) == 1 + 6 * 3 * books.bits_per_symbol
