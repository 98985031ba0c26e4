#include "m2r/reference.hpp"

namespace m2r {

std::string_view reference_benchmark_csv() {
    return R"csv(# m2rnet reference v1: published M2RNet scores, not desk-reproducible
dataset,s_alpha,f_max,f_avg,f_weighted,e_xi,mae
STEREO,0.899,0.913,0.867,0.851,0.929,0.042
NLPR,0.918,0.921,0.862,0.848,0.941,0.033
RGBD135,0.934,0.937,0.910,0.903,0.971,0.019
LFSD,0.842,0.861,0.825,0.786,0.874,0.088
NJU2K,0.910,0.922,0.841,0.854,0.904,0.049
DUT-RGBD,0.903,0.925,0.892,0.864,0.935,0.042
SIP,0.882,0.902,0.868,0.840,0.921,0.049
)csv";
}

std::string_view reference_ablation_csv() {
    return R"csv(# m2rnet ablation v1: published ablation scores, not desk-reproducible
scheme,p1,p2,i1,i2,l1,l2,l3,l4,s_alpha,f_max,f_avg,f_weighted,e_xi,mae
1,0,0,0,0,0,0,0,0,0.885,0.820,0.775,0.899,0.872,0.064
2,1,0,0,0,0,0,0,0,0.893,0.833,0.790,0.907,0.880,0.060
3,0,1,0,0,0,0,0,0,0.887,0.827,0.779,0.903,0.875,0.063
4,1,1,0,0,0,0,0,0,0.894,0.837,0.796,0.910,0.882,0.059
5,0,0,1,0,0,0,0,0,0.896,0.839,0.804,0.914,0.885,0.058
6,0,0,0,1,0,0,0,0,0.890,0.832,0.788,0.906,0.878,0.061
7,0,0,1,1,0,0,0,0,0.891,0.865,0.812,0.919,0.873,0.055
8,0,0,0,0,1,0,0,0,0.891,0.865,0.812,0.919,0.873,0.055
9,0,0,0,0,0,1,0,0,0.892,0.812,0.786,0.899,0.866,0.061
10,0,0,0,0,0,0,1,0,0.893,0.848,0.819,0.916,0.876,0.053
11,0,0,0,0,0,0,0,1,0.887,0.819,0.778,0.900,0.871,0.063
12,0,0,0,0,1,1,1,1,0.899,0.856,0.831,0.921,0.880,0.050
13,1,1,1,1,1,1,1,1,0.913,0.873,0.854,0.929,0.897,0.043
)csv";
}

}  // namespace m2r
