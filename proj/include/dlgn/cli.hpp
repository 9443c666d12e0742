#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dlgn/data.hpp"
#include "dlgn/train.hpp"

namespace dlgn {

// Where sweep cells get their data: a synthetic generator (one dataset per
// class count) or a dataset file cut down with take_classes.
struct DataSource {
    std::optional<std::filesystem::path> file;
    SyntheticSpec synthetic;  // num_classes is overridden per cell
    double val_fraction = 0.2;
};

struct ModelSpec {
    std::size_t layers = 4;  // including the output layer
    std::size_t width = 4096;
};

// Cartesian sweep over the axes below, times seeds.
struct ExperimentPlan {
    std::string kind = "sweep";
    DataSource data;
    ModelSpec model;
    std::vector<std::size_t> classes{10};
    std::vector<double> taus{10.0};
    std::vector<std::size_t> output_dims;        // used when neurons_per_class is empty
    std::vector<std::size_t> neurons_per_class;  // overrides output_dims
    std::vector<double> dropouts{0.0};
    std::vector<std::uint64_t> seeds{0};
    TrainConfig train;  // head is filled in per cell
    std::filesystem::path out_dir = ".";

    // Throws std::invalid_argument for empty axes or no seeds.
    void validate() const;
};

struct SweepCell {
    std::size_t classes = 0;
    double tau = 0;
    std::size_t output_dim = 0;
    double dropout = 0;
    std::uint64_t seed = 0;

    std::size_t neurons_per_class() const { return output_dim / classes; }
};

// Cells in axis order: classes, tau, output dim, dropout, seed (seed fastest).
std::vector<SweepCell> expand_plan(const ExperimentPlan& plan);

TrainConfig cell_train_config(const ExperimentPlan& plan, const SweepCell& cell);
// Hash of everything that determines a cell's result (data, model, training).
std::string cell_hash(const ExperimentPlan& plan, const SweepCell& cell, const std::string& data_id);

struct SweepRow {
    std::string config_hash;
    SweepCell cell;
    std::size_t epochs = 0;
    double acc_discrete = 0;
    double acc_relaxed = 0;
    double acc_discrete_best = 0;
    std::size_t best_epoch = 0;
};

inline constexpr const char* kSweepHeader =
    "config_hash,classes,tau,output_dim,neurons_per_class,dropout,seed,epochs,acc_discrete,"
    "acc_relaxed,acc_discrete_best,best_epoch";
std::string sweep_row_csv(const SweepRow& r);
// Rows of an existing sweep CSV; a missing file gives none.
std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& path);

// Runs every cell whose hash is not already in `csv_path`, appending one row
// per finished cell. Returns the rows of the whole file afterwards.
std::vector<SweepRow> run_sweep(const ExperimentPlan& plan, const std::filesystem::path& csv_path,
                                std::size_t workers = 1, std::ostream* log = nullptr);

// Mean and sample standard deviation per cell (seeds collapsed).
std::string sweep_summary_csv(const std::vector<SweepRow>& rows);
// For every (classes, neurons_per_class) the tau with the best mean discrete accuracy.
std::string best_tau_csv(const std::vector<SweepRow>& rows);

// Percent of rates per bin; bins are [i/bins, (i+1)/bins), the last one closed.
std::vector<double> rate_histogram(const std::vector<double>& rates, std::size_t bins = 100);
std::string histogram_csv(const std::vector<double>& percent);
// Fraction of rates in [0, 0.02] U [0.48, 0.52] U [0.98, 1].
double extreme_rate_mass(const std::vector<double>& rates);

// Entry point of the dlgn tool. Returns the process exit code.
int run_cli(int argc, const char* const* argv);

}  // namespace dlgn
