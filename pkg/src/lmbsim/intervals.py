"""Sorted set of disjoint half-open integer intervals."""

from bisect import bisect_right


class IntervalSet:
    """Disjoint ``[start, end)`` intervals kept sorted and coalesced.

    ``barriers`` are points across which adjacent intervals are never merged;
    the fabric manager uses them to keep free space inside one DMP.
    """

    def __init__(self, intervals=(), barriers=()):
        self._starts = []
        self._ends = []
        self._barriers = frozenset(barriers)
        for start, end in intervals:
            self.add(start, end)

    def __iter__(self):
        return iter(zip(self._starts, self._ends))

    def __len__(self):
        return len(self._starts)

    def __eq__(self, other):
        if not isinstance(other, IntervalSet):
            return NotImplemented
        return list(self) == list(other)

    def __repr__(self):
        return f"IntervalSet({list(self)!r})"

    def total(self):
        return sum(e - s for s, e in self)

    def contains(self, start, end):
        """True iff ``[start, end)`` lies inside one interval."""
        i = bisect_right(self._starts, start) - 1
        return i >= 0 and end <= self._ends[i]

    def overlaps(self, start, end):
        i = bisect_right(self._starts, start) - 1
        if i >= 0 and self._ends[i] > start:
            return True
        return i + 1 < len(self._starts) and self._starts[i + 1] < end

    def add(self, start, end):
        if end <= start:
            raise ValueError(f"empty interval [{start}, {end})")
        if self.overlaps(start, end):
            raise ValueError(f"[{start:#x}, {end:#x}) overlaps an existing interval")
        i = bisect_right(self._starts, start)
        # merge with left neighbour
        if i > 0 and self._ends[i - 1] == start and start not in self._barriers:
            i -= 1
            start = self._starts[i]
            del self._starts[i], self._ends[i]
        # merge with right neighbour
        if i < len(self._starts) and self._starts[i] == end and end not in self._barriers:
            end = self._ends[i]
            del self._starts[i], self._ends[i]
        self._starts.insert(i, start)
        self._ends.insert(i, end)

    def remove(self, start, end):
        """Remove ``[start, end)``, which must lie inside one interval."""
        i = bisect_right(self._starts, start) - 1
        if i < 0 or end > self._ends[i] or end <= start:
            raise ValueError(f"[{start:#x}, {end:#x}) is not inside the set")
        s, e = self._starts[i], self._ends[i]
        del self._starts[i], self._ends[i]
        if end < e:
            self._starts.insert(i, end)
            self._ends.insert(i, e)
        if s < start:
            self._starts.insert(i, s)
            self._ends.insert(i, start)

    def first_fit(self, size, align=1):
        """Lowest aligned start of a ``size``-long hole, or None."""
        for s, e in zip(self._starts, self._ends):
            a = -(-s // align) * align
            if a + size <= e:
                return a
        return None
