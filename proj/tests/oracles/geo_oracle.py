"""Independent oracle for frozen geodesy/verification test values.

Distances are computed from the chord length between 3-D unit vectors
(d = 2R asin(|u - v| / 2)) in 50-digit arithmetic, which shares no code
path with the haversine implementation under test.
"""
from mpmath import mp, mpf, sin, cos, asin, sqrt, pi, radians

mp.dps = 50
R = mpf("6371.0")
C = mpf("299792.458")


def unit(lat, lon):
    la, lo = radians(mpf(lat)), radians(mpf(lon))
    return (cos(la) * cos(lo), cos(la) * sin(lo), sin(la))


def dist(a, b):
    u, v = unit(*a), unit(*b)
    chord = sqrt(sum((x - y) ** 2 for x, y in zip(u, v)))
    return 2 * R * asin(chord / 2)


def min_rtt(d):
    return 3 * mpf(d) / C * 1000


def show(label, value):
    print(f"{label:<48} {mp.nstr(value, 15)}")


show("dist (0,0)-(0,90)", dist((0, 0), (0, 90)))
show("dist (90,0)-(-90,0)", dist((90, 0), (-90, 0)))
show("dist (0,0)-(0,1)", dist((0, 0), (0, 1)))
show("dist (0,0)-(0,10)", dist((0, 0), (0, 10)))
show("min_rtt 1000 km", min_rtt(1000))
show("min_rtt 100 km", min_rtt(100))
show("circle radius (0,0)-(0,90)", dist((0, 0), (0, 90)) / 2)
show("circle radius (10,10)-(10,10.0002)", dist((10, 10), (10, mpf("10.0002"))) / 2)
show("circle radius (0,-10)-(0,10)", dist((0, -10), (0, 10)) / 2)
show("simulated 1000 km c=1.5 lastmile 5", min_rtt(1000) * mpf("1.5") + 5)

# Nested triangles around the origin: inner (2,0),(-2,2),(-2,-2) and
# outer (10,0),(-10,10),(-10,-10).  Perimeters decide enumeration order.
def perimeter(tri):
    a, b, c = tri
    return dist(a, b) + dist(b, c) + dist(c, a)

inner = [(2, 0), (-2, 2), (-2, -2)]
outer = [(10, 0), (-10, 10), (-10, -10)]
show("perimeter inner", perimeter(inner))
show("perimeter outer", perimeter(outer))

# Four-verifier enumeration case: containment by triple-product signs.
from itertools import combinations

def cross(u, v):
    return (u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0])

def dot(u, v):
    return sum(x * y for x, y in zip(u, v))

def contains(tri, p):
    a, b, c = (unit(*v) for v in tri)
    q = unit(*p)
    s = dot(a, cross(b, c))
    return all(dot(q, cross(x, y)) * s >= 0 for x, y in ((a, b), (b, c), (c, a)))

four = {"v1": (10, 0), "v2": (-10, 10), "v3": (-10, -10), "v4": (-3, 3)}
for ids in combinations(sorted(four), 3):
    tri = [four[i] for i in ids]
    print(ids, contains(tri, (0, 0)), mp.nstr(perimeter(tri), 12))
