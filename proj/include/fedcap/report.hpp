#pragma once

#include "fedcap/client.hpp"

#include <map>
#include <string_view>
#include <vector>

namespace fedcap {

enum class Verdict { benign, malicious, unchecked };

std::string_view to_string(Verdict v);

struct ClientRoundRow {
    ClientId id = 0;
    bool malicious = false;   // ground-truth role
    Verdict verdict = Verdict::unchecked;
    double update_norm = 0.0;      // ||uploaded update||
    double calibrated_norm = 0.0;  // ||calibrated update||; equals update_norm for baselines
    double acc_customized = 0.0;   // model the server sent this round
    double acc_personalized = 0.0; // personalized (FedCAP) or locally updated (baselines) model
};

struct RoundReport {
    std::size_t round = 0;
    std::vector<ClientRoundRow> rows;  // ascending id
    /// Customized-aggregation weights per participant, FedCAP rounds t > 0 only.
    std::map<ClientId, std::map<ClientId, double>> weights;
    bool degenerate = false;
    std::size_t exchanged_models = 0;  // cumulative
};

}  // namespace fedcap
