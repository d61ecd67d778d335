"""Simulated covert channel hidden in search-suggestion traffic."""

from .codebook import ChannelKey, Codebook, WordEntry, build_codebook, decode_word, encode_chunk, load_codebook, save_codebook
from .core import (
    Close,
    Data,
    EndOfData,
    RegistrationConfirm,
    WsCase,
    choose_ws,
    compute_ssi,
    decode_frame,
    embed_ssi_in_ts,
    encode_frame,
    recover_original,
)
from .errors import StegSuggestError
from .harness import SimConfig, SimReport, estimate_bandwidth, mock_server_respond, run_simulation
from .kernels import BACKEND
from .shim import SrShim, SsShim, StegContext, reassemble
from .stats import analyze, render_report

__version__ = "0.1.0"
