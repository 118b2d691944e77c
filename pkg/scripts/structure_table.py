"""Loop analysis for every occupancy pattern and case, plus the generic wiring."""

import itertools

from huda.connect import TopologyTag
from huda.structure import algebraic_loops, blt_sort, loop_free, worst_case_incidence


def main():
    print(f"{'tag':>8} {'loop-free':>9}  order or loop")
    tags = [TopologyTag(p, s, d, c) for p, s, d in itertools.product([False, True], repeat=3) for c in ("ab" if s else "a")]
    for tag in tags + [TopologyTag.parse("generic")]:
        inc = worst_case_incidence(tag)
        res = blt_sort(inc)
        text = ", ".join(res.equations) if res.ok else str(res)
        flag = loop_free(tag) if not tag.generic else not algebraic_loops(inc)
        print(f"{tag.label:>8} {str(flag):>9}  {text}")


if __name__ == "__main__":
    main()
