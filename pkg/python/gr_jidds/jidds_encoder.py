#!/usr/bin/env python3
"""
GNU Radio block for coset LDPC encoding onto a 2D page
"""

import logging

import numpy as np
from gnuradio import gr

from .jidds import build_link, encode_page

logger = logging.getLogger(__name__)


class jidds_encoder(gr.basic_block):
    """
    JIDDS page encoder block

    Encodes K information bits per page, maps the coset codeword onto the
    N_r x N_c page and convolves it with the channel response.
    Input: uint8 information bits (0 or 1)
    Output: Float32 noiseless readback samples, one page of N per K inputs, row-major
    """

    def __init__(self, code="1024,3,6", channel="HA", grid="auto", mapping="row-major", mapping_seed=0,
                 coset="zero", seed=0, max_buffer_pages=16):
        """
        Initialize JIDDS encoder

        Args:
            code: Alist path or regular code parameters "N,DV,DC"
            channel: Channel preset (HA, HB, AWGN) or channel matrix file
            grid: Page shape "RxC" or "auto"
            mapping: Sequence-to-page mapping ('row-major' or 'random')
            mapping_seed: Seed of the random mapping
            coset: Coset vector ('zero' or 'random')
            seed: Code construction and coset seed; must match the decoder
            max_buffer_pages: Input bits buffered ahead of encoding, in pages
        """
        gr.basic_block.__init__(self, name="jidds_encoder", in_sig=[np.uint8], out_sig=[np.float32])

        try:
            self.code, self.channel, self.mapping = build_link(
                code, channel=channel, grid=grid, mapping=mapping, mapping_seed=mapping_seed, coset=coset, seed=seed
            )
        except Exception as e:
            raise RuntimeError(f"Failed to initialize JIDDS encoder: {e}")

        self.bit_buffer = np.zeros(0, dtype=np.uint8)
        self.sample_buffer = np.zeros(0, dtype=np.float32)
        self.max_buffer_bits = self.code.k * max(1, max_buffer_pages)

    def forecast(self, noutput_items, ninputs):
        # Buffered samples and complete buffered pages need no new input
        pending = len(self.sample_buffer) or len(self.bit_buffer) >= self.code.k
        return [0 if pending else 1] * ninputs

    def general_work(self, input_items, output_items):
        """
        Encode complete pages and stream their readback samples
        """
        in0 = input_items[0]
        out = output_items[0]

        # Take only what fits; the rest stays queued upstream
        take = max(0, min(len(in0), self.max_buffer_bits - len(self.bit_buffer)))
        self.bit_buffer = np.concatenate([self.bit_buffer, (in0[:take] & 1).astype(np.uint8)])
        self.consume_each(take)

        k = self.code.k
        while len(self.bit_buffer) >= k and len(self.sample_buffer) < len(out):
            u, self.bit_buffer = self.bit_buffer[:k], self.bit_buffer[k:]
            try:
                _, y = encode_page(u, self.code, self.mapping, self.channel)
            except Exception:
                logger.exception("JIDDS encoding error, page dropped")
                continue
            self.sample_buffer = np.concatenate([self.sample_buffer, y.astype(np.float32).ravel()])

        produced = min(len(out), len(self.sample_buffer))
        out[:produced] = self.sample_buffer[:produced]
        self.sample_buffer = self.sample_buffer[produced:]
        return produced
