from typing import Dict

__all__ = ['TcpReceiverState']


class TcpReceiverState:
    """Cumulative-ACK receiver: one ACK per data segment, out-of-order data kept as ``{start: end}`` ranges."""

    def __init__(self):
        self.rcv_nxt = 0
        self.ooo_segments: Dict[int, int] = {}

    def on_segment(self, seq_no: int, length: int) -> int:
        """Returns the cumulative ACK number to send back."""
        end = seq_no + length
        if seq_no <= self.rcv_nxt < end:
            self.rcv_nxt = end
            self._merge_buffered()
        elif seq_no > self.rcv_nxt:
            self.ooo_segments[seq_no] = max(end, self.ooo_segments.get(seq_no, end))
        return self.rcv_nxt

    def _merge_buffered(self):
        for start in sorted(self.ooo_segments):
            if start > self.rcv_nxt:
                break
            self.rcv_nxt = max(self.rcv_nxt, self.ooo_segments[start])
        self.ooo_segments = {s: e for s, e in self.ooo_segments.items() if e > self.rcv_nxt}
