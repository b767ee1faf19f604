#!/usr/bin/env python3
"""
GNU Radio block for joint iterative detection and decoding of 2D pages
"""

import logging

import numpy as np
from gnuradio import gr

from .jidds import IterationSchedule, JiddsReceiver, build_link

logger = logging.getLogger(__name__)


class jidds_decoder(gr.basic_block):
    """
    JIDDS page decoder block

    Runs the detector/decoder loop on each received page.
    Input: Float32 received samples, N per page, row-major
    Output: uint8 decoded information bits, K per page
    """

    def __init__(self, code="1024,3,6", channel="HA", grid="auto", mapping="row-major", mapping_seed=0,
                 coset="zero", seed=0, sigma=0.5, iters="3/50/10", early_exit=True, max_buffer_pages=16):
        """
        Initialize JIDDS decoder

        Args:
            code, channel, grid, mapping, mapping_seed, coset, seed: As for jidds_encoder
            sigma: Noise standard deviation assumed by the detector
            iters: Iteration counts "DET/IC/IOUT"
            early_exit: Stop once the syndrome check passes
            max_buffer_pages: Received samples buffered ahead of decoding, in pages
        """
        gr.basic_block.__init__(self, name="jidds_decoder", in_sig=[np.float32], out_sig=[np.uint8])

        try:
            code, channel, mapping = build_link(
                code, channel=channel, grid=grid, mapping=mapping, mapping_seed=mapping_seed, coset=coset, seed=seed
            )
            self.receiver = JiddsReceiver(code, mapping, channel, IterationSchedule.parse(iters), early_exit=early_exit)
        except Exception as e:
            raise RuntimeError(f"Failed to initialize JIDDS decoder: {e}")
        if sigma <= 0:
            raise RuntimeError(f"Failed to initialize JIDDS decoder: sigma must be positive, got {sigma}")

        self.sigma = float(sigma)
        self.page_samples = code.n
        self.sample_buffer = np.zeros(0, dtype=np.float64)
        self.bit_buffer = np.zeros(0, dtype=np.uint8)
        self.max_buffer_samples = code.n * max(1, max_buffer_pages)

    def set_sigma(self, sigma):
        if sigma <= 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        self.sigma = float(sigma)

    def forecast(self, noutput_items, ninputs):
        # Buffered bits and complete buffered pages need no new input
        pending = len(self.bit_buffer) or len(self.sample_buffer) >= self.page_samples
        return [0 if pending else 1] * ninputs

    def general_work(self, input_items, output_items):
        """
        Decode complete pages and stream the recovered information bits
        """
        in0 = input_items[0]
        out = output_items[0]

        # Take only what fits; the rest stays queued upstream
        take = max(0, min(len(in0), self.max_buffer_samples - len(self.sample_buffer)))
        self.sample_buffer = np.concatenate([self.sample_buffer, in0[:take].astype(np.float64)])
        self.consume_each(take)

        mapping = self.receiver.mapping
        n = self.page_samples
        while len(self.sample_buffer) >= n and len(self.bit_buffer) < len(out):
            page, self.sample_buffer = self.sample_buffer[:n], self.sample_buffer[n:]
            try:
                bits = self.receiver.decode_page(page.reshape(mapping.n_rows, mapping.n_cols), self.sigma)
            except Exception:
                logger.exception("JIDDS decoding error, page dropped")
                continue
            self.bit_buffer = np.concatenate([self.bit_buffer, bits.astype(np.uint8)])

        produced = min(len(out), len(self.bit_buffer))
        out[:produced] = self.bit_buffer[:produced]
        self.bit_buffer = self.bit_buffer[produced:]
        return produced
