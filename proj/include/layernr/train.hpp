#pragma once

#include "layernr/config.hpp"
#include "layernr/dataset.hpp"
#include "layernr/nn.hpp"

#include <iosfwd>

namespace lnr {

// Raised when the loss goes non-finite; a diagnostic dump of the offending
// batch is written next to the checkpoint before throwing.
struct numerical_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainResult {
    long iterations = 0;               // optimizer steps completed in total
    std::vector<double> loss_history;  // total loss per step of this run
};

// Optimizes the model on random (frame, query view) pairs and pixel
// minibatches. Writes resumable checkpoints (parameters + Adam moments +
// iteration + config hash) to checkpoint_path.
TrainResult train_model(Model& model, const Dataset& ds, const RunConfig& cfg,
                        const std::string& checkpoint_path, bool resume,
                        std::ostream* log = nullptr, bool log_json = false);

}  // namespace lnr
