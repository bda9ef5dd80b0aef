"""Joint and part vocabularies shared by every stage.

Joint indices and part labels are frozen project-wide; files on disk and
model keys depend on them.
"""

JOINT_NAMES = (
    "forehead", "neck",
    "l_shoulder", "r_shoulder",
    "l_elbow", "r_elbow",
    "l_wrist", "r_wrist",
    "l_waist", "r_waist",
    "l_knee", "r_knee",
    "l_ankle", "r_ankle",
)
NUM_JOINTS = len(JOINT_NAMES)
JOINT_INDEX = {name: i for i, name in enumerate(JOINT_NAMES)}

FOREHEAD, NECK = 0, 1
L_SHOULDER, R_SHOULDER = 2, 3
L_ELBOW, R_ELBOW = 4, 5
L_WRIST, R_WRIST = 6, 7
L_WAIST, R_WAIST = 8, 9
L_KNEE, R_KNEE = 10, 11
L_ANKLE, R_ANKLE = 12, 13

# 0 is background
PART_NAMES = ("background", "head", "torso", "upper_arm", "lower_arm",
              "upper_leg", "lower_leg")
NUM_PARTS = len(PART_NAMES)
BACKGROUND, HEAD, TORSO, UPPER_ARM, LOWER_ARM, UPPER_LEG, LOWER_LEG = range(7)

# (parent, child) pairs of the kinematic tree rooted at the neck
EDGES = (
    (FOREHEAD, NECK),
    (NECK, L_SHOULDER), (NECK, R_SHOULDER),
    (L_SHOULDER, L_ELBOW), (R_SHOULDER, R_ELBOW),
    (L_ELBOW, L_WRIST), (R_ELBOW, R_WRIST),
    (NECK, L_WAIST), (NECK, R_WAIST),
    (L_WAIST, L_KNEE), (R_WAIST, R_KNEE),
    (L_KNEE, L_ANKLE), (R_KNEE, R_ANKLE),
)
NUM_NEIGHBOR_CHANNELS = NUM_JOINTS * (NUM_JOINTS - 1) * 2

EDGE_PART = {
    (FOREHEAD, NECK): HEAD,
    (NECK, L_SHOULDER): TORSO, (NECK, R_SHOULDER): TORSO,
    (L_SHOULDER, L_ELBOW): UPPER_ARM, (R_SHOULDER, R_ELBOW): UPPER_ARM,
    (L_ELBOW, L_WRIST): LOWER_ARM, (R_ELBOW, R_WRIST): LOWER_ARM,
    (NECK, L_WAIST): TORSO, (NECK, R_WAIST): TORSO,
    (L_WAIST, L_KNEE): UPPER_LEG, (R_WAIST, R_KNEE): UPPER_LEG,
    (L_KNEE, L_ANKLE): LOWER_LEG, (R_KNEE, R_ANKLE): LOWER_LEG,
}

JOINT_PARTS = {
    FOREHEAD: (HEAD,),
    NECK: (HEAD, TORSO),
    L_SHOULDER: (TORSO, UPPER_ARM), R_SHOULDER: (TORSO, UPPER_ARM),
    L_ELBOW: (UPPER_ARM, LOWER_ARM), R_ELBOW: (UPPER_ARM, LOWER_ARM),
    L_WRIST: (LOWER_ARM,), R_WRIST: (LOWER_ARM,),
    L_WAIST: (TORSO, UPPER_LEG), R_WAIST: (TORSO, UPPER_LEG),
    L_KNEE: (UPPER_LEG, LOWER_LEG), R_KNEE: (UPPER_LEG, LOWER_LEG),
    L_ANKLE: (LOWER_LEG,), R_ANKLE: (LOWER_LEG,),
}


def edge_key(a, b):
    """Return the skeleton edge joining joint types a and b, or None."""
    if (a, b) in EDGE_PART:
        return (a, b)
    if (b, a) in EDGE_PART:
        return (b, a)
    return None


def neighbor_channel(src, dst, axis):
    """Channel of the offset map holding the src->dst offset along axis (0=x, 1=y)."""
    if src == dst:
        raise ValueError("no offset channel for a joint type onto itself")
    slot = dst if dst < src else dst - 1
    return src * 26 + slot * 2 + axis


# joint groups reported in the pose tables
AP_GROUPS = (
    ("Head", (FOREHEAD, NECK)),
    ("Shoulder", (L_SHOULDER, R_SHOULDER)),
    ("Elbow", (L_ELBOW, R_ELBOW)),
    ("Wrist", (L_WRIST, R_WRIST)),
    ("Hip", (L_WAIST, R_WAIST)),
    ("Knee", (L_KNEE, R_KNEE)),
    ("Ankle", (L_ANKLE, R_ANKLE)),
    ("U-Body", tuple(range(0, 8))),
)
ADK_GROUPS = (
    ("Forehead", (FOREHEAD,)),
    ("Neck", (NECK,)),
) + AP_GROUPS[1:7]
