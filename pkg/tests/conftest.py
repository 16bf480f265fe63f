import numpy as np
import pytest

from posebox.geometry import Box3D, Camera, quat_from_rotmat

# World -> camera rotation for a forward-looking driving camera:
# world +x (forward) becomes camera +z, world +y (left) becomes
# camera -x, world +z (up) becomes camera -y.
DRIVING_ROT = np.array(
    [
        [0.0, -1.0, 0.0],
        [0.0, 0.0, -1.0],
        [1.0, 0.0, 0.0],
    ]
)


def make_driving_camera(
    fx=500.0,
    fy=500.0,
    cx=256.0,
    cy=256.0,
    width=512,
    height=512,
    position=(0.0, 0.0, 0.0),
):
    """Camera at `position` (world) looking along world +x."""
    pos = np.asarray(position, dtype=np.float64)
    return Camera(
        fx=fx,
        fy=fy,
        cx=cx,
        cy=cy,
        width=width,
        height=height,
        rotation=quat_from_rotmat(DRIVING_ROT),
        translation=-DRIVING_ROT @ pos,
    )


def random_box(rng, x_range=(6.0, 30.0), y_range=(-6.0, 6.0), z_range=(-1.5, 1.5)):
    """A box somewhere in front of the driving camera."""
    center = [
        rng.uniform(*x_range),
        rng.uniform(*y_range),
        rng.uniform(*z_range),
    ]
    size = tuple(rng.uniform(0.8, 4.0, size=3))
    yaw = rng.uniform(-np.pi, np.pi)
    return Box3D(center=center, size=size, yaw=yaw)


def random_pose_camera(rng):
    """A camera with a random orientation and position."""
    # Random rotation via QR of a Gaussian matrix, flipped to det +1.
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return Camera(
        fx=rng.uniform(200, 800),
        fy=rng.uniform(200, 800),
        cx=rng.uniform(100, 400),
        cy=rng.uniform(100, 400),
        width=512,
        height=512,
        rotation=quat_from_rotmat(q),
        translation=rng.uniform(-5, 5, size=3),
    )


@pytest.fixture
def camera():
    return make_driving_camera()


@pytest.fixture
def rng():
    return np.random.default_rng(20260822)
