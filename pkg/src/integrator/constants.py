from enum import IntEnum, StrEnum

import numpy as np


class IntegratorMethod(StrEnum):
    EXPLICIT = "explicit"
    SEMI_IMPLICIT = "semi_implicit"


class CrossingDirection(IntEnum):
    FALLING = -1
    EITHER = 0
    RISING = 1


CACHE_MAGIC = b"CSTJ"
CACHE_VERSION = 1
CACHE_HEADER_FORMAT = "<4sHII"

# Dormand-Prince 5(4)
DOPRI_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
DOPRI_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
DOPRI_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
DOPRI_B_HAT = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
DOPRI_ERROR_ORDER = 5

# ROS3: L-stable three-stage Rosenbrock method, order 3 with embedded order 2
ROS3_GAMMA = np.array(
    [
        0.43586652150845899941601945119356,
        0.24291996454816804366592249683314,
        2.1851380027664058511513169485832,
    ]
)
ROS3_ALPHA = np.array(
    [0.0, 0.43586652150845899941601945119356, 0.43586652150845899941601945119356]
)
ROS3_A = {(1, 0): 1.0, (2, 0): 1.0, (2, 1): 0.0}
ROS3_C = {
    (1, 0): -1.0156171083877702091975600115545,
    (2, 0): 4.0759956452537699824805835358067,
    (2, 1): 9.2076794298330791242156818474003,
}
ROS3_M = np.array(
    [1.0, 6.1697947043828245592553615689730, -0.42772256543218573326238373806514]
)
ROS3_E = np.array(
    [0.5, -2.9079558716805469821718236208017, 0.22354069897811569627360909276199]
)
ROS3_NEW_F = (True, True, False)
ROS3_ERROR_ORDER = 3
