"""
Edges and facial regions
========================

Render one synthetic face, equalize it, run the Canny detector and locate
the five feature regions.  Writes the intermediate images as PGM files so
they can be opened in any image viewer.
"""
import sys
from pathlib import Path

import numpy as np

from facexpr import Expression, canny, edges_to_image, extract_all, histogram_equalize, write_pgm
from facexpr.synth import synth_face

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(exist_ok=True)

# a happy face: mouth corners up, wide mouth
face = synth_face(Expression.HAPPINESS, np.random.default_rng(0))
eq = histogram_equalize(face)
print("grey levels before/after equalization:", np.ptp(face), np.ptp(eq))

# default thresholds: high = 0.2 * strongest thinned gradient, low = high / 2
edges = canny(eq)
print("edge pixels:", int(edges.sum()))

regions = extract_all(eq, edges)
for name, rect in regions.rects.items():
    print(f"{name:<14} {rect}")

# outline every region box on a copy of the face
marked = eq.copy()
for r in regions.rects.values():
    marked[r.y, r.x : r.x + r.w] = 255
    marked[r.y + r.h - 1, r.x : r.x + r.w] = 255
    marked[r.y : r.y + r.h, r.x] = 255
    marked[r.y : r.y + r.h, r.x + r.w - 1] = 255

write_pgm(out / "face.pgm", face)
write_pgm(out / "equalized.pgm", eq)
write_pgm(out / "edges.pgm", edges_to_image(edges))
write_pgm(out / "regions.pgm", marked)
print("wrote", out)
