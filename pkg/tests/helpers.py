from spotwise.geometry import Detection, NormBox
from spotwise.spots import SpotAnnotation, SpotMap


def make_spot_map(centers, width=1024, height=512, critical=(), size=(0.04, 0.06)):
    spots = tuple(
        SpotAnnotation(i, NormBox(x, y, *size), critical=i in set(critical))
        for i, (x, y) in enumerate(centers, start=1)
    )
    return SpotMap(spots, width, height)


def det(x, y, w=0.05, h=0.05, conf=0.9, index=0):
    return Detection(NormBox(x, y, w, h), conf, index)
