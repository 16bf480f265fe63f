"""Scene-building helpers shared by the raster, mask and acceptance tests."""

import numpy as np

from posebox import geometry, raster


def cam_point(camera, u, v, z):
    """Camera-frame point that projects exactly to pixel (u, v) at depth z."""
    return np.array(
        [(u - camera.cx) * z / camera.fx, (v - camera.cy) * z / camera.fy, float(z)]
    )


def render_scene(camera, boxes, colors_by_id, n_channels=3, z_near=0.1):
    """Render boxes through the production clip -> fan -> fill path.

    `boxes` is a list of (id, Box3D) in draw order; `colors_by_id` maps
    each id to a color vector of length n_channels.
    """
    target = raster.RasterTarget(camera.width, camera.height, n_channels, with_ids=True)
    for bid, box in boxes:
        corners = geometry.world_to_camera(camera, geometry.box_corners(box))
        for _, (i, j, k) in geometry.face_triangles():
            poly = geometry.clip_polygon_near(corners[[i, j, k]], z_near)
            for t in range(1, len(poly) - 1):
                raster.fill_triangle(
                    target, poly[[0, t, t + 1]], colors_by_id[bid], camera, instance_id=bid
                )
    return target


def scene_triangles(camera, boxes, colors_by_id):
    """The same scene as a flat camera-frame triangle list in draw order."""
    tris = []
    for bid, box in boxes:
        corners = geometry.world_to_camera(camera, geometry.box_corners(box))
        for _, tri in geometry.face_triangles():
            tris.append((corners[list(tri)], colors_by_id[bid], bid))
    return tris
