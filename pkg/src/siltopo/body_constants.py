"""Frozen constants of the 2-D articulated figure (version 1).

Lengths and radii are fractions of the canvas height. Image axes: x to the
right, y down. ``l_*`` limbs sit on the +x side of the canonical figure.
Changing anything here invalidates the golden fixtures under tests/data.
"""
import math

BODY_MODEL_VERSION = 1

JOINTS = (
    "pelvis", "neck", "head_top",
    "l_elbow", "l_wrist", "r_elbow", "r_wrist",
    "l_knee", "l_ankle", "r_knee", "r_ankle",
)

_ARM = (math.cos(math.pi / 4), math.sin(math.pi / 4))
_LEG = (math.sin(math.radians(20.0)), math.cos(math.radians(20.0)))

# name, parent joint, child joint, parent segment, rest direction,
# rest length, radius class, joint-angle range (radians)
SEGMENTS = (
    ("torso", "pelvis", "neck", None, (0.0, -1.0), 0.150, "torso", (-0.5, 0.5)),
    ("head", "neck", "head_top", "torso", (0.0, -1.0), 0.050, "torso", (-0.5, 0.5)),
    ("l_upper_arm", "neck", "l_elbow", "torso", _ARM, 0.070, "limb", (-1.2, 1.2)),
    ("l_forearm", "l_elbow", "l_wrist", "l_upper_arm", _ARM, 0.065, "limb", (-1.2, 1.2)),
    ("r_upper_arm", "neck", "r_elbow", "torso", (-_ARM[0], _ARM[1]), 0.070, "limb", (-1.2, 1.2)),
    ("r_forearm", "r_elbow", "r_wrist", "r_upper_arm", (-_ARM[0], _ARM[1]), 0.065, "limb", (-1.2, 1.2)),
    ("l_thigh", "pelvis", "l_knee", None, _LEG, 0.090, "limb", (-0.7, 0.7)),
    ("l_shin", "l_knee", "l_ankle", "l_thigh", _LEG, 0.075, "limb", (-0.7, 0.7)),
    ("r_thigh", "pelvis", "r_knee", None, (-_LEG[0], _LEG[1]), 0.090, "limb", (-0.7, 0.7)),
    ("r_shin", "r_knee", "r_ankle", "r_thigh", (-_LEG[0], _LEG[1]), 0.075, "limb", (-0.7, 0.7)),
)

BASE_RADIUS = {"torso": 0.035, "limb": 0.020}

# index pairs swapped by a left/right mirror
MIRROR_SEGMENTS = ((2, 4), (3, 5), (6, 8), (7, 9))
MIRROR_JOINTS = ((3, 5), (4, 6), (7, 9), (8, 10))

PHI_DIM = len(SEGMENTS)
BETA_DIM = 3
PARAM_DIM = PHI_DIM + BETA_DIM + 4

BETA_BOX = (0.5, 2.0)
SCALE_BOX = (0.05, 20.0)
