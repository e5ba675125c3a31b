#pragma once

namespace canoe::reward {

struct RewardBreakdown {
    int r_acc = 0;     // 0|1
    int r_proxy = 0;   // 0|1
    int r_format = 0;  // 0|1
    int r_final = 0;   // r_acc + r_proxy + r_format
};

}  // namespace canoe::reward
