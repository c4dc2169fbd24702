#pragma once

namespace handover {

// Probability of feeding back the model's own prediction: a linear ramp
// from 0 at epoch 0 to 1 at `ramp_epochs`, then held at 1.
double sched_sampling_p(int epoch, int ramp_epochs = 50);

// Constant `lr_start` before `decay_start_epoch`, then geometric decay that
// reaches `lr_end` at the final epoch (`total_epochs - 1`).
double lr_schedule(int epoch, int total_epochs, double lr_start = 1e-4, double lr_end = 1e-7,
                   int decay_start_epoch = 50);

}  // namespace handover
