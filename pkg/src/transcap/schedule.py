"""Periodic link schedules for centralized (TDMA-style) MACs."""

from dataclasses import dataclass

from .errors import ModelError


@dataclass(frozen=True)
class Schedule:
    """A slot-indexed list of link sets, repeating from ``loop_start``.

    Slot ``u`` (1-based) maps to ``slots[u - 1]`` while inside the list and
    then cycles over ``slots[loop_start:]``.  The optimal line schedule
    ``{1}, {2}, {3}, {1,4}, {2}, {3}, {1,4}, ...`` is therefore
    ``Schedule(({0}, {1}, {2}, {0, 3}), loop_start=1)`` with 0-based links.
    """

    slots: tuple
    loop_start: int = 0

    def __post_init__(self):
        slots = tuple(frozenset(int(x) for x in s) for s in self.slots)
        if not slots:
            raise ModelError("schedule must contain at least one slot")
        if not 0 <= self.loop_start < len(slots):
            raise ModelError(
                f"loop_start={self.loop_start} outside schedule of length {len(slots)}"
            )
        object.__setattr__(self, "slots", slots)

    @property
    def period(self):
        return len(self.slots) - self.loop_start

    def position(self, u):
        """Schedule position used in slot ``u >= 1``."""
        i = u - 1
        if i < len(self.slots):
            return i
        return self.loop_start + (i - self.loop_start) % self.period

    def links_at(self, u):
        return self.slots[self.position(u)]

    def links(self):
        out = set()
        for s in self.slots:
            out |= s
        return sorted(out)

    def successor(self, pos):
        return pos + 1 if pos + 1 < len(self.slots) else self.loop_start

    @classmethod
    def parse(cls, text, loop_start=0):
        """Parse ``"0,1,2,0+3"``: commas split slots, ``+`` joins links."""
        slots = []
        for chunk in text.split(","):
            chunk = chunk.strip().strip("()")
            if not chunk:
                raise ModelError(f"empty slot in schedule {text!r}")
            slots.append(frozenset(int(x) for x in chunk.split("+")))
        return cls(tuple(slots), loop_start)

    def to_text(self):
        return ",".join("+".join(str(x) for x in sorted(s)) for s in self.slots)


def line_schedule():
    """Optimal schedule of the 5-node line with contention range 3."""
    return Schedule(({0}, {1}, {2}, {0, 3}), loop_start=1)
