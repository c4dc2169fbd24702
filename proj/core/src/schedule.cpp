#include "handover/schedule.hpp"

#include <algorithm>
#include <cmath>

#include "handover/error.hpp"

namespace handover {

double sched_sampling_p(int epoch, int ramp_epochs) {
    if (epoch < 0) throw ValidationError("sched_sampling_p: negative epoch");
    if (ramp_epochs <= 0) return 1.0;
    return std::min(1.0, static_cast<double>(epoch) / static_cast<double>(ramp_epochs));
}

double lr_schedule(int epoch, int total_epochs, double lr_start, double lr_end, int decay_start_epoch) {
    if (epoch < 0) throw ValidationError("lr_schedule: negative epoch");
    if (!(lr_start > 0.0) || !(lr_end > 0.0)) throw ValidationError("lr_schedule: rates must be positive");
    const int final_epoch = std::max(total_epochs - 1, 0);
    if (epoch < decay_start_epoch) return lr_start;
    if (epoch >= final_epoch) return lr_end;
    const double span = static_cast<double>(final_epoch - decay_start_epoch);
    const double frac = static_cast<double>(epoch - decay_start_epoch) / span;
    return lr_start * std::pow(lr_end / lr_start, frac);
}

}  // namespace handover
