#!/usr/bin/env python3
"""Regenerate data/case14.m and data/case118.m with machine-precision solved states.

The raw network data below is the standard IEEE 14-bus / 118-bus test case data
(UW power systems test case archive, MATPOWER column layout). We re-solve the AC
power flow to ~1e-12 mismatch and embed the solved bus voltages in the emitted
.m files, so that downstream consumers get true states that satisfy the network
equations (in particular: exactly zero injection at zero-injection buses).

Also emits the area partition files used by the multi-area experiments.
"""

import json
import math
import os
import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.join(HERE, "..", "data")

# ---------------------------------------------------------------- case data --
# bus: [bus_i, type, Pd, Qd, Gs, Bs, area, Vm, Va, baseKV, zone, Vmax, Vmin]
# gen: [bus, Pg, Qg, Qmax, Qmin, Vg, mBase, status, Pmax, Pmin]
# branch: [f, t, r, x, b, rateA, rateB, rateC, ratio, angle, status]

CASE14 = {
    "baseMVA": 100.0,
    "bus": [
        [1, 3, 0.0, 0.0, 0, 0, 1, 1.060, 0.00, 0, 1, 1.06, 0.94],
        [2, 2, 21.7, 12.7, 0, 0, 1, 1.045, -4.98, 0, 1, 1.06, 0.94],
        [3, 2, 94.2, 19.0, 0, 0, 1, 1.010, -12.72, 0, 1, 1.06, 0.94],
        [4, 1, 47.8, -3.9, 0, 0, 1, 1.019, -10.33, 0, 1, 1.06, 0.94],
        [5, 1, 7.6, 1.6, 0, 0, 1, 1.020, -8.78, 0, 1, 1.06, 0.94],
        [6, 2, 11.2, 7.5, 0, 0, 1, 1.070, -14.22, 0, 1, 1.06, 0.94],
        [7, 1, 0.0, 0.0, 0, 0, 1, 1.062, -13.37, 0, 1, 1.06, 0.94],
        [8, 2, 0.0, 0.0, 0, 0, 1, 1.090, -13.36, 0, 1, 1.06, 0.94],
        [9, 1, 29.5, 16.6, 0, 19, 1, 1.056, -14.94, 0, 1, 1.06, 0.94],
        [10, 1, 9.0, 5.8, 0, 0, 1, 1.051, -15.10, 0, 1, 1.06, 0.94],
        [11, 1, 3.5, 1.8, 0, 0, 1, 1.057, -14.79, 0, 1, 1.06, 0.94],
        [12, 1, 6.1, 1.6, 0, 0, 1, 1.055, -15.07, 0, 1, 1.06, 0.94],
        [13, 1, 13.5, 5.8, 0, 0, 1, 1.050, -15.16, 0, 1, 1.06, 0.94],
        [14, 1, 14.9, 5.0, 0, 0, 1, 1.036, -16.04, 0, 1, 1.06, 0.94],
    ],
    "gen": [
        [1, 232.4, -16.9, 10, 0, 1.060, 100, 1, 332.4, 0],
        [2, 40.0, 42.4, 50, -40, 1.045, 100, 1, 140, 0],
        [3, 0.0, 23.4, 40, 0, 1.010, 100, 1, 100, 0],
        [6, 0.0, 12.2, 24, -6, 1.070, 100, 1, 100, 0],
        [8, 0.0, 17.4, 24, -6, 1.090, 100, 1, 100, 0],
    ],
    "branch": [
        [1, 2, 0.01938, 0.05917, 0.0528, 0, 0, 0, 0, 0, 1],
        [1, 5, 0.05403, 0.22304, 0.0492, 0, 0, 0, 0, 0, 1],
        [2, 3, 0.04699, 0.19797, 0.0438, 0, 0, 0, 0, 0, 1],
        [2, 4, 0.05811, 0.17632, 0.0340, 0, 0, 0, 0, 0, 1],
        [2, 5, 0.05695, 0.17388, 0.0346, 0, 0, 0, 0, 0, 1],
        [3, 4, 0.06701, 0.17103, 0.0128, 0, 0, 0, 0, 0, 1],
        [4, 5, 0.01335, 0.04211, 0.0, 0, 0, 0, 0, 0, 1],
        [4, 7, 0.0, 0.20912, 0.0, 0, 0, 0, 0.978, 0, 1],
        [4, 9, 0.0, 0.55618, 0.0, 0, 0, 0, 0.969, 0, 1],
        [5, 6, 0.0, 0.25202, 0.0, 0, 0, 0, 0.932, 0, 1],
        [6, 11, 0.09498, 0.19890, 0.0, 0, 0, 0, 0, 0, 1],
        [6, 12, 0.12291, 0.25581, 0.0, 0, 0, 0, 0, 0, 1],
        [6, 13, 0.06615, 0.13027, 0.0, 0, 0, 0, 0, 0, 1],
        [7, 8, 0.0, 0.17615, 0.0, 0, 0, 0, 0, 0, 1],
        [7, 9, 0.0, 0.11001, 0.0, 0, 0, 0, 0, 0, 1],
        [9, 10, 0.03181, 0.08450, 0.0, 0, 0, 0, 0, 0, 1],
        [9, 14, 0.12711, 0.27038, 0.0, 0, 0, 0, 0, 0, 1],
        [10, 11, 0.08205, 0.19207, 0.0, 0, 0, 0, 0, 0, 1],
        [12, 13, 0.22092, 0.19988, 0.0, 0, 0, 0, 0, 0, 1],
        [13, 14, 0.17093, 0.34802, 0.0, 0, 0, 0, 0, 0, 1],
    ],
}

BUS118 = [
    # bus_i type   Pd    Qd   Gs   Bs
    [1, 2, 51, 27, 0, 0], [2, 1, 20, 9, 0, 0], [3, 1, 39, 10, 0, 0],
    [4, 2, 39, 12, 0, 0], [5, 1, 0, 0, 0, -40], [6, 2, 52, 22, 0, 0],
    [7, 1, 19, 2, 0, 0], [8, 2, 28, 0, 0, 0], [9, 1, 0, 0, 0, 0],
    [10, 2, 0, 0, 0, 0], [11, 1, 70, 23, 0, 0], [12, 2, 47, 10, 0, 0],
    [13, 1, 34, 16, 0, 0], [14, 1, 14, 1, 0, 0], [15, 2, 90, 30, 0, 0],
    [16, 1, 25, 10, 0, 0], [17, 1, 11, 3, 0, 0], [18, 2, 60, 34, 0, 0],
    [19, 2, 45, 25, 0, 0], [20, 1, 18, 3, 0, 0], [21, 1, 14, 8, 0, 0],
    [22, 1, 10, 5, 0, 0], [23, 1, 7, 3, 0, 0], [24, 2, 13, 0, 0, 0],
    [25, 2, 0, 0, 0, 0], [26, 2, 0, 0, 0, 0], [27, 2, 71, 13, 0, 0],
    [28, 1, 17, 7, 0, 0], [29, 1, 24, 4, 0, 0], [30, 1, 0, 0, 0, 0],
    [31, 2, 43, 27, 0, 0], [32, 2, 59, 23, 0, 0], [33, 1, 23, 9, 0, 0],
    [34, 2, 59, 26, 0, 14], [35, 1, 33, 9, 0, 0], [36, 2, 31, 17, 0, 0],
    [37, 1, 0, 0, 0, -25], [38, 1, 0, 0, 0, 0], [39, 1, 27, 11, 0, 0],
    [40, 2, 66, 23, 0, 0], [41, 1, 37, 10, 0, 0], [42, 2, 96, 23, 0, 0],
    [43, 1, 18, 7, 0, 0], [44, 1, 16, 8, 0, 10], [45, 1, 53, 22, 0, 10],
    [46, 2, 28, 10, 0, 10], [47, 1, 34, 0, 0, 0], [48, 1, 20, 11, 0, 15],
    [49, 2, 87, 30, 0, 0], [50, 1, 17, 4, 0, 0], [51, 1, 17, 8, 0, 0],
    [52, 1, 18, 5, 0, 0], [53, 1, 23, 11, 0, 0], [54, 2, 113, 32, 0, 0],
    [55, 2, 63, 22, 0, 0], [56, 2, 84, 18, 0, 0], [57, 1, 12, 3, 0, 0],
    [58, 1, 12, 3, 0, 0], [59, 2, 277, 113, 0, 0], [60, 1, 78, 3, 0, 0],
    [61, 2, 0, 0, 0, 0], [62, 2, 77, 14, 0, 0], [63, 1, 0, 0, 0, 0],
    [64, 1, 0, 0, 0, 0], [65, 2, 0, 0, 0, 0], [66, 2, 39, 18, 0, 0],
    [67, 1, 28, 7, 0, 0], [68, 1, 0, 0, 0, 0], [69, 3, 0, 0, 0, 0],
    [70, 2, 66, 20, 0, 0], [71, 1, 0, 0, 0, 0], [72, 2, 12, 0, 0, 0],
    [73, 2, 6, 0, 0, 0], [74, 2, 68, 27, 0, 12], [75, 1, 47, 11, 0, 0],
    [76, 2, 68, 36, 0, 0], [77, 2, 61, 28, 0, 0], [78, 1, 71, 26, 0, 0],
    [79, 1, 39, 32, 0, 20], [80, 2, 130, 26, 0, 0], [81, 1, 0, 0, 0, 0],
    [82, 1, 54, 27, 0, 20], [83, 1, 20, 10, 0, 10], [84, 1, 11, 7, 0, 0],
    [85, 2, 24, 15, 0, 0], [86, 1, 21, 10, 0, 0], [87, 2, 0, 0, 0, 0],
    [88, 1, 48, 10, 0, 0], [89, 2, 0, 0, 0, 0], [90, 2, 163, 42, 0, 0],
    [91, 2, 10, 0, 0, 0], [92, 2, 65, 10, 0, 0], [93, 1, 12, 7, 0, 0],
    [94, 1, 30, 16, 0, 0], [95, 1, 42, 31, 0, 0], [96, 1, 38, 15, 0, 0],
    [97, 1, 15, 9, 0, 0], [98, 1, 34, 8, 0, 0], [99, 2, 42, 0, 0, 0],
    [100, 2, 37, 18, 0, 0], [101, 1, 22, 15, 0, 0], [102, 1, 5, 3, 0, 0],
    [103, 2, 23, 16, 0, 0], [104, 2, 38, 25, 0, 0], [105, 2, 31, 26, 0, 20],
    [106, 1, 43, 16, 0, 0], [107, 2, 50, 12, 0, 6], [108, 1, 2, 1, 0, 0],
    [109, 1, 8, 3, 0, 0], [110, 2, 39, 30, 0, 6], [111, 2, 0, 0, 0, 0],
    [112, 2, 68, 13, 0, 0], [113, 2, 6, 0, 0, 0], [114, 1, 8, 3, 0, 0],
    [115, 1, 22, 7, 0, 0], [116, 2, 184, 0, 0, 0], [117, 1, 20, 8, 0, 0],
    [118, 1, 33, 15, 0, 0],
]

GEN118 = [
    # bus    Pg     Vg
    [1, 0.0, 0.955], [4, 0.0, 0.998], [6, 0.0, 0.990], [8, 0.0, 1.015],
    [10, 450.0, 1.050], [12, 85.0, 0.990], [15, 0.0, 0.970], [18, 0.0, 0.973],
    [19, 0.0, 0.962], [24, 0.0, 0.992], [25, 220.0, 1.050], [26, 314.0, 1.015],
    [27, 0.0, 0.968], [31, 7.0, 0.967], [32, 0.0, 0.963], [34, 0.0, 0.984],
    [36, 0.0, 0.980], [40, 0.0, 0.970], [42, 0.0, 0.985], [46, 19.0, 1.005],
    [49, 204.0, 1.025], [54, 48.0, 0.955], [55, 0.0, 0.952], [56, 0.0, 0.954],
    [59, 155.0, 0.985], [61, 160.0, 0.995], [62, 0.0, 0.998], [65, 391.0, 1.005],
    [66, 392.0, 1.050], [69, 516.4, 1.035], [70, 0.0, 0.984], [72, 0.0, 0.980],
    [73, 0.0, 0.991], [74, 0.0, 0.958], [76, 0.0, 0.943], [77, 0.0, 1.006],
    [80, 477.0, 1.040], [85, 0.0, 0.985], [87, 4.0, 1.015], [89, 607.0, 1.005],
    [90, 0.0, 0.985], [91, 0.0, 0.980], [92, 0.0, 0.990], [99, 0.0, 1.010],
    [100, 252.0, 1.017], [103, 40.0, 1.001], [104, 0.0, 0.971], [105, 0.0, 0.965],
    [107, 0.0, 0.952], [110, 0.0, 0.973], [111, 36.0, 0.980], [112, 0.0, 0.975],
    [113, 0.0, 0.993], [116, 0.0, 1.005],
]

BRANCH118 = [
    # f    t      r        x       b     ratio
    [1, 2, 0.0303, 0.0999, 0.0254, 0],
    [1, 3, 0.0129, 0.0424, 0.01082, 0],
    [4, 5, 0.00176, 0.00798, 0.0021, 0],
    [3, 5, 0.0241, 0.108, 0.0284, 0],
    [5, 6, 0.0119, 0.054, 0.01426, 0],
    [6, 7, 0.00459, 0.0208, 0.0055, 0],
    [8, 9, 0.00244, 0.0305, 1.162, 0],
    [8, 5, 0.0, 0.0267, 0.0, 0.985],
    [9, 10, 0.00258, 0.0322, 1.23, 0],
    [4, 11, 0.0209, 0.0688, 0.01748, 0],
    [5, 11, 0.0203, 0.0682, 0.01738, 0],
    [11, 12, 0.00595, 0.0196, 0.00502, 0],
    [2, 12, 0.0187, 0.0616, 0.01572, 0],
    [3, 12, 0.0484, 0.16, 0.0406, 0],
    [7, 12, 0.00862, 0.034, 0.00874, 0],
    [11, 13, 0.02225, 0.0731, 0.01876, 0],
    [12, 14, 0.0215, 0.0707, 0.01816, 0],
    [13, 15, 0.0744, 0.2444, 0.06268, 0],
    [14, 15, 0.0595, 0.195, 0.0502, 0],
    [12, 16, 0.0212, 0.0834, 0.0214, 0],
    [15, 17, 0.0132, 0.0437, 0.0444, 0],
    [16, 17, 0.0454, 0.1801, 0.0466, 0],
    [17, 18, 0.0123, 0.0505, 0.01298, 0],
    [18, 19, 0.01119, 0.0493, 0.01142, 0],
    [19, 20, 0.0252, 0.117, 0.0298, 0],
    [15, 19, 0.012, 0.0394, 0.0101, 0],
    [20, 21, 0.0183, 0.0849, 0.0216, 0],
    [21, 22, 0.0209, 0.097, 0.0246, 0],
    [22, 23, 0.0342, 0.159, 0.0404, 0],
    [23, 24, 0.0135, 0.0492, 0.0498, 0],
    [23, 25, 0.0156, 0.08, 0.0864, 0],
    [26, 25, 0.0, 0.0382, 0.0, 0.96],
    [25, 27, 0.0318, 0.163, 0.1764, 0],
    [27, 28, 0.01913, 0.0855, 0.0216, 0],
    [28, 29, 0.0237, 0.0943, 0.0238, 0],
    [30, 17, 0.0, 0.0388, 0.0, 0.96],
    [8, 30, 0.00431, 0.0504, 0.514, 0],
    [26, 30, 0.00799, 0.086, 0.908, 0],
    [17, 31, 0.0474, 0.1563, 0.0399, 0],
    [29, 31, 0.0108, 0.0331, 0.0083, 0],
    [23, 32, 0.0317, 0.1153, 0.1173, 0],
    [31, 32, 0.0298, 0.0985, 0.0251, 0],
    [27, 32, 0.0229, 0.0755, 0.01926, 0],
    [15, 33, 0.038, 0.1244, 0.03194, 0],
    [19, 34, 0.0752, 0.247, 0.0632, 0],
    [35, 36, 0.00224, 0.0102, 0.00268, 0],
    [35, 37, 0.011, 0.0497, 0.01318, 0],
    [33, 37, 0.0415, 0.142, 0.0366, 0],
    [34, 36, 0.00871, 0.0268, 0.00568, 0],
    [34, 37, 0.00256, 0.0094, 0.00984, 0],
    [38, 37, 0.0, 0.0375, 0.0, 0.935],
    [37, 39, 0.0321, 0.106, 0.027, 0],
    [37, 40, 0.0593, 0.168, 0.042, 0],
    [30, 38, 0.00464, 0.054, 0.422, 0],
    [39, 40, 0.0184, 0.0605, 0.01552, 0],
    [40, 41, 0.0145, 0.0487, 0.01222, 0],
    [40, 42, 0.0555, 0.183, 0.0466, 0],
    [41, 42, 0.041, 0.135, 0.0344, 0],
    [43, 44, 0.0608, 0.2454, 0.06068, 0],
    [34, 43, 0.0413, 0.1681, 0.04226, 0],
    [44, 45, 0.0224, 0.0901, 0.0224, 0],
    [45, 46, 0.04, 0.1356, 0.0332, 0],
    [46, 47, 0.038, 0.127, 0.0316, 0],
    [46, 48, 0.0601, 0.189, 0.0472, 0],
    [47, 49, 0.0191, 0.0625, 0.01604, 0],
    [42, 49, 0.0715, 0.323, 0.086, 0],
    [42, 49, 0.0715, 0.323, 0.086, 0],
    [45, 49, 0.0684, 0.186, 0.0444, 0],
    [48, 49, 0.0179, 0.0505, 0.01258, 0],
    [49, 50, 0.0267, 0.0752, 0.01874, 0],
    [49, 51, 0.0486, 0.137, 0.0342, 0],
    [51, 52, 0.0203, 0.0588, 0.01396, 0],
    [52, 53, 0.0405, 0.1635, 0.04058, 0],
    [53, 54, 0.0263, 0.122, 0.031, 0],
    [49, 54, 0.073, 0.289, 0.0738, 0],
    [49, 54, 0.0869, 0.291, 0.073, 0],
    [54, 55, 0.0169, 0.0707, 0.0202, 0],
    [54, 56, 0.00275, 0.00955, 0.00732, 0],
    [55, 56, 0.00488, 0.0151, 0.00374, 0],
    [56, 57, 0.0343, 0.0966, 0.0242, 0],
    [50, 57, 0.0474, 0.134, 0.0332, 0],
    [56, 58, 0.0343, 0.0966, 0.0242, 0],
    [51, 58, 0.0255, 0.0719, 0.01788, 0],
    [54, 59, 0.0503, 0.2293, 0.0598, 0],
    [56, 59, 0.0825, 0.251, 0.0569, 0],
    [56, 59, 0.0803, 0.239, 0.0536, 0],
    [55, 59, 0.04739, 0.2158, 0.05646, 0],
    [59, 60, 0.0317, 0.145, 0.0376, 0],
    [59, 61, 0.0328, 0.15, 0.0388, 0],
    [60, 61, 0.00264, 0.0135, 0.01456, 0],
    [60, 62, 0.0123, 0.0561, 0.01468, 0],
    [61, 62, 0.00824, 0.0376, 0.0098, 0],
    [63, 59, 0.0, 0.0386, 0.0, 0.96],
    [63, 64, 0.00172, 0.02, 0.216, 0],
    [64, 61, 0.0, 0.0268, 0.0, 0.985],
    [38, 65, 0.00901, 0.0986, 1.046, 0],
    [64, 65, 0.00269, 0.0302, 0.38, 0],
    [49, 66, 0.018, 0.0919, 0.0248, 0],
    [49, 66, 0.018, 0.0919, 0.0248, 0],
    [62, 66, 0.0482, 0.218, 0.0578, 0],
    [62, 67, 0.0258, 0.117, 0.031, 0],
    [65, 66, 0.0, 0.037, 0.0, 0.935],
    [66, 67, 0.0224, 0.1015, 0.02682, 0],
    [65, 68, 0.00138, 0.016, 0.638, 0],
    [47, 69, 0.0844, 0.2778, 0.07092, 0],
    [49, 69, 0.0985, 0.324, 0.0828, 0],
    [68, 69, 0.0, 0.037, 0.0, 0.935],
    [69, 70, 0.03, 0.127, 0.122, 0],
    [24, 70, 0.00221, 0.4115, 0.10198, 0],
    [70, 71, 0.00882, 0.0355, 0.00878, 0],
    [24, 72, 0.0488, 0.196, 0.0488, 0],
    [71, 72, 0.0446, 0.18, 0.04444, 0],
    [71, 73, 0.00866, 0.0454, 0.01178, 0],
    [70, 74, 0.0401, 0.1323, 0.03368, 0],
    [70, 75, 0.0428, 0.141, 0.036, 0],
    [69, 75, 0.0405, 0.122, 0.124, 0],
    [74, 75, 0.0123, 0.0406, 0.01034, 0],
    [76, 77, 0.0444, 0.148, 0.0368, 0],
    [69, 77, 0.0309, 0.101, 0.1038, 0],
    [75, 77, 0.0601, 0.1999, 0.04978, 0],
    [77, 78, 0.00376, 0.0124, 0.01264, 0],
    [78, 79, 0.00546, 0.0244, 0.00648, 0],
    [77, 80, 0.017, 0.0485, 0.0472, 0],
    [77, 80, 0.0294, 0.105, 0.0228, 0],
    [79, 80, 0.0156, 0.0704, 0.0187, 0],
    [68, 81, 0.00175, 0.0202, 0.808, 0],
    [81, 80, 0.0, 0.037, 0.0, 0.935],
    [77, 82, 0.0298, 0.0853, 0.08174, 0],
    [82, 83, 0.0112, 0.03665, 0.03796, 0],
    [83, 84, 0.0625, 0.132, 0.0258, 0],
    [83, 85, 0.043, 0.148, 0.0348, 0],
    [84, 85, 0.0302, 0.0641, 0.01234, 0],
    [85, 86, 0.035, 0.123, 0.0276, 0],
    [86, 87, 0.02828, 0.2074, 0.0445, 0],
    [85, 88, 0.02, 0.102, 0.0276, 0],
    [85, 89, 0.0239, 0.173, 0.047, 0],
    [88, 89, 0.0139, 0.0712, 0.01934, 0],
    [89, 90, 0.0518, 0.188, 0.0528, 0],
    [89, 90, 0.0238, 0.0997, 0.106, 0],
    [90, 91, 0.0254, 0.0836, 0.0214, 0],
    [89, 92, 0.0099, 0.0505, 0.0548, 0],
    [89, 92, 0.0393, 0.1581, 0.0414, 0],
    [91, 92, 0.0387, 0.1272, 0.03268, 0],
    [92, 93, 0.0258, 0.0848, 0.0218, 0],
    [92, 94, 0.0481, 0.158, 0.0406, 0],
    [93, 94, 0.0223, 0.0732, 0.01876, 0],
    [94, 95, 0.0132, 0.0434, 0.0111, 0],
    [80, 96, 0.0356, 0.182, 0.0494, 0],
    [82, 96, 0.0162, 0.053, 0.0544, 0],
    [94, 96, 0.0269, 0.0869, 0.023, 0],
    [80, 97, 0.0183, 0.0934, 0.0254, 0],
    [80, 98, 0.0238, 0.108, 0.0286, 0],
    [80, 99, 0.0454, 0.206, 0.0546, 0],
    [92, 100, 0.0648, 0.295, 0.0472, 0],
    [94, 100, 0.0178, 0.058, 0.0604, 0],
    [95, 96, 0.0171, 0.0547, 0.01474, 0],
    [96, 97, 0.0173, 0.0885, 0.024, 0],
    [98, 100, 0.0397, 0.179, 0.0476, 0],
    [99, 100, 0.018, 0.0813, 0.0216, 0],
    [100, 101, 0.0277, 0.1262, 0.0328, 0],
    [92, 102, 0.0123, 0.0559, 0.01464, 0],
    [101, 102, 0.0246, 0.112, 0.0294, 0],
    [100, 103, 0.016, 0.0525, 0.0536, 0],
    [100, 104, 0.0451, 0.204, 0.0541, 0],
    [103, 104, 0.0466, 0.1584, 0.0407, 0],
    [103, 105, 0.0535, 0.1625, 0.0408, 0],
    [100, 106, 0.0605, 0.229, 0.062, 0],
    [104, 105, 0.00994, 0.0378, 0.00986, 0],
    [105, 106, 0.014, 0.0547, 0.01434, 0],
    [105, 107, 0.053, 0.183, 0.0472, 0],
    [105, 108, 0.0261, 0.0703, 0.01844, 0],
    [106, 107, 0.053, 0.183, 0.0472, 0],
    [108, 109, 0.0105, 0.0288, 0.0076, 0],
    [103, 110, 0.03906, 0.1813, 0.0461, 0],
    [109, 110, 0.0278, 0.0762, 0.0202, 0],
    [110, 111, 0.022, 0.0755, 0.02, 0],
    [110, 112, 0.0247, 0.064, 0.062, 0],
    [17, 113, 0.00913, 0.0301, 0.00768, 0],
    [32, 113, 0.0615, 0.203, 0.0518, 0],
    [32, 114, 0.0135, 0.0612, 0.01628, 0],
    [27, 115, 0.0164, 0.0741, 0.01972, 0],
    [114, 115, 0.0023, 0.0104, 0.00276, 0],
    [68, 116, 0.00034, 0.00405, 0.164, 0],
    [12, 117, 0.0329, 0.14, 0.0358, 0],
    [75, 118, 0.0145, 0.0481, 0.01198, 0],
    [76, 118, 0.0164, 0.0544, 0.01356, 0],
]

CASE118 = {
    "baseMVA": 100.0,
    "bus": [[b[0], b[1], b[2], b[3], b[4], b[5], 1, 1.0, 0.0, 0, 1, 1.06, 0.94]
            for b in BUS118],
    "gen": [[g[0], g[1], 0.0, 300, -300, g[2], 100, 1, 800, 0] for g in GEN118],
    "branch": [[b[0], b[1], b[2], b[3], b[4], 0, 0, 0, b[5], 0, 1]
               for b in BRANCH118],
}

# Two-area split of the 14-bus system: area 1 = buses 1-5, area 2 = the rest.
# Tie-lines: (4,7), (4,9), (5,6).
PARTITION14 = {b: (1 if b <= 5 else 2) for b in range(1, 15)}

# Three-area split of the 118-bus system with 12 tie-lines:
# 1<->2: (15,33) (19,34) (37,38); 1<->3: (38,65) (24,70) (24,72);
# 2<->3: (64,65) (65,66) (68,69) (69,70) (69,75) (69,77).
AREA1_118 = set(range(1, 33)) | {38, 113, 114, 115, 117}
AREA2_118 = (set(range(33, 38)) | set(range(39, 65)) | {66, 67, 69}) - {38}
AREA3_118 = {65, 68} | set(range(70, 113)) | {116, 118}
PARTITION118 = {}
for b in range(1, 119):
    if b in AREA1_118:
        PARTITION118[b] = 1
    elif b in AREA2_118:
        PARTITION118[b] = 2
    else:
        assert b in AREA3_118
        PARTITION118[b] = 3


def make_ybus(case):
    nb = len(case["bus"])
    idx = {int(row[0]): k for k, row in enumerate(case["bus"])}
    Y = np.zeros((nb, nb), dtype=complex)
    for br in case["branch"]:
        if br[10] == 0:
            continue
        f, t = idx[int(br[0])], idx[int(br[1])]
        r, x, bc = br[2], br[3], br[4]
        tau = br[8] if br[8] != 0 else 1.0
        ys = 1.0 / complex(r, x)
        Y[f, f] += (ys + 1j * bc / 2) / tau**2
        Y[t, t] += ys + 1j * bc / 2
        Y[f, t] += -ys / tau
        Y[t, f] += -ys / tau
    for row in case["bus"]:
        k = idx[int(row[0])]
        Y[k, k] += complex(row[4], row[5]) / case["baseMVA"]
    return Y, idx


def solve_pf(case, tol=1e-12, max_iter=40):
    Y, idx = make_ybus(case)
    nb = len(case["bus"])
    base = case["baseMVA"]
    Pd = np.array([row[2] for row in case["bus"]]) / base
    Qd = np.array([row[3] for row in case["bus"]]) / base
    Pg = np.zeros(nb)
    Vg = {}
    for g in case["gen"]:
        if g[7] != 1:
            continue
        k = idx[int(g[0])]
        Pg[k] += g[1] / base
        Vg[k] = g[5]
    Psp = Pg - Pd
    Qsp = -Qd
    types = np.array([row[1] for row in case["bus"]])
    slack = int(np.where(types == 3)[0][0])
    pv = [k for k in range(nb) if types[k] == 2]
    pq = [k for k in range(nb) if types[k] == 1]

    V = np.array([row[7] for row in case["bus"]], dtype=float)
    th = np.radians(np.array([row[8] for row in case["bus"]], dtype=float))
    for k in pv + [slack]:
        V[k] = Vg.get(k, V[k])

    nonslack = pv + pq
    for it in range(max_iter):
        U = V * np.exp(1j * th)
        S = U * np.conj(Y @ U)
        dP = Psp - S.real
        dQ = Qsp - S.imag
        mis = np.concatenate([dP[nonslack], dQ[pq]])
        if np.max(np.abs(mis)) < tol:
            return V, th, it
        # standard polar Jacobian
        dSdTh = 1j * np.diag(U) @ (np.diag(np.conj(Y @ U)) - np.conj(Y) @ np.diag(np.conj(U)))
        dSdV = np.diag(U / V) @ np.conj(Y) @ np.diag(np.conj(U)) \
            + np.diag(np.conj(Y @ U)) @ np.diag(np.exp(1j * th))
        J11 = dSdTh.real[np.ix_(nonslack, nonslack)]
        J12 = dSdV.real[np.ix_(nonslack, pq)]
        J21 = dSdTh.imag[np.ix_(pq, nonslack)]
        J22 = dSdV.imag[np.ix_(pq, pq)]
        J = np.block([[J11, J12], [J21, J22]])
        dx = np.linalg.solve(J, mis)
        th[nonslack] += dx[: len(nonslack)]
        V[pq] += dx[len(nonslack):]
    raise RuntimeError("power flow did not converge")


def check_partition(case, part, expect_ties):
    ties = []
    internal = 0
    for br in case["branch"]:
        a, b = part[int(br[0])], part[int(br[1])]
        if a != b:
            ties.append((int(br[0]), int(br[1])))
        else:
            internal += 1
    if len(ties) != expect_ties:
        raise AssertionError(f"expected {expect_ties} tie-lines, got {len(ties)}: {ties}")
    # every area internally connected
    areas = sorted(set(part.values()))
    for a in areas:
        nodes = {b for b, aa in part.items() if aa == a}
        adj = {n: set() for n in nodes}
        for br in case["branch"]:
            f, t = int(br[0]), int(br[1])
            if f in nodes and t in nodes:
                adj[f].add(t)
                adj[t].add(f)
        seen = set()
        stack = [next(iter(nodes))]
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            stack.extend(adj[n] - seen)
        if seen != nodes:
            raise AssertionError(f"area {a} internally disconnected: missing {nodes - seen}")
    return ties, internal


def fmt(v):
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def write_case_m(case, name, V, th, path):
    lines = [f"function mpc = {name}", "mpc.version = '2';",
             f"mpc.baseMVA = {fmt(case['baseMVA'])};", "", "mpc.bus = ["]
    for k, row in enumerate(case["bus"]):
        r = list(row)
        r[7] = V[k]
        r[8] = math.degrees(th[k])
        lines.append("\t" + "\t".join(fmt(x) if i not in (7, 8) else repr(float(r[i]))
                                      for i, x in enumerate(r)) + ";")
    lines.append("];")
    lines.append("")
    lines.append("mpc.gen = [")
    for row in case["gen"]:
        lines.append("\t" + "\t".join(fmt(x) for x in row) + ";")
    lines.append("];")
    lines.append("")
    lines.append("mpc.branch = [")
    for row in case["branch"]:
        lines.append("\t" + "\t".join(fmt(x) for x in row) + ";")
    lines.append("];")
    lines.append("")
    with open(path, "w") as f:
        f.write("\n".join(lines))


def main():
    os.makedirs(DATA, exist_ok=True)
    for case, name, part, nties in [(CASE14, "case14", PARTITION14, 3),
                                    (CASE118, "case118", PARTITION118, 12)]:
        ties, internal = check_partition(case, part, nties)
        V, th, iters = solve_pf(case)
        th = th - th[0]  # bus 1 is the estimation reference angle
        U = V * np.exp(1j * th)
        Y, idx = make_ybus(case)
        S = U * np.conj(Y @ U)
        genbus = {int(g[0]) for g in case["gen"] if g[7] == 1}
        zinj = [int(r[0]) for r in case["bus"]
                if r[2] == 0 and r[3] == 0 and int(r[0]) not in genbus]
        wc = max(abs(S[idx[b]]) for b in zinj)
        print(f"{name}: {len(case['bus'])} buses, {len(case['branch'])} branches "
              f"({internal} internal + {len(ties)} tie), NR iters={iters}, "
              f"V in [{V.min():.4f}, {V.max():.4f}], "
              f"zero-inj buses={zinj}, worst |S|={wc:.2e}")
        write_case_m(case, name, V, th, os.path.join(DATA, f"{name}.m"))
        with open(os.path.join(DATA, f"partition{name[4:]}.json"), "w") as f:
            json.dump({"assignment": {str(b): a for b, a in sorted(part.items())}}, f, indent=1)
        print(f"  ties: {ties}")


if __name__ == "__main__":
    main()
