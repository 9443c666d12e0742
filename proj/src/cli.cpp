#include "dlgn/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "dlgn/bytes.hpp"
#include "dlgn/checkpoint.hpp"
#include "dlgn/compile.hpp"

namespace dlgn {

namespace {

constexpr std::size_t kDeskWidthLimit = 8192;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(line);
    while (std::getline(in, cur, ',')) out.push_back(cur);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

void ExperimentPlan::validate() const {
    if (classes.empty() || taus.empty() || dropouts.empty()) {
        throw std::invalid_argument("plan: sweep axes must be non-empty");
    }
    if (output_dims.empty() && neurons_per_class.empty()) {
        throw std::invalid_argument("plan: give output dims or neurons per class");
    }
    if (seeds.empty()) throw std::invalid_argument("plan: at least one seed is required");
    if (model.layers == 0 || model.width == 0) throw std::invalid_argument("plan: empty model");
    for (auto k : classes) {
        if (k < 2) throw std::invalid_argument("plan: class counts must be >= 2");
    }
}

std::vector<SweepCell> expand_plan(const ExperimentPlan& plan) {
    plan.validate();
    std::vector<SweepCell> cells;
    for (auto k : plan.classes) {
        std::vector<std::size_t> dims;
        if (!plan.neurons_per_class.empty()) {
            for (auto npc : plan.neurons_per_class) dims.push_back(npc * k);
        } else {
            // Largest multiple of k that fits the requested width.
            for (auto d : plan.output_dims) dims.push_back(d / k * k);
        }
        for (double tau : plan.taus) {
            for (auto d : dims) {
                if (d == 0) {
                    throw std::invalid_argument("plan: output dim smaller than " + std::to_string(k) + " classes");
                }
                for (double p : plan.dropouts) {
                    for (auto seed : plan.seeds) cells.push_back({k, tau, d, p, seed});
                }
            }
        }
    }
    return cells;
}

TrainConfig cell_train_config(const ExperimentPlan& plan, const SweepCell& cell) {
    TrainConfig c = plan.train;
    c.head = make_group_sum_head(cell.output_dim, cell.classes, cell.tau, cell.dropout);
    c.head.dropout_rescale = plan.train.head.dropout_rescale;
    c.head.dropout_scope = plan.train.head.dropout_scope;
    c.seed = cell.seed;
    return c;
}

std::string cell_hash(const ExperimentPlan& plan, const SweepCell& cell, const std::string& data_id) {
    std::ostringstream os;
    os << cell_train_config(plan, cell).canonical() << ";layers=" << plan.model.layers
       << ";width=" << plan.model.width << ";data=" << data_id;
    return hex64(fnv1a(os.str()));
}

std::string sweep_row_csv(const SweepRow& r) {
    std::ostringstream os;
    os << r.config_hash << ',' << r.cell.classes << ',' << num(r.cell.tau) << ',' << r.cell.output_dim << ','
       << r.cell.neurons_per_class() << ',' << num(r.cell.dropout) << ',' << r.cell.seed << ',' << r.epochs << ','
       << pct(r.acc_discrete) << ',' << pct(r.acc_relaxed) << ',' << pct(r.acc_discrete_best) << ','
       << r.best_epoch;
    return os.str();
}

std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& path) {
    std::vector<SweepRow> rows;
    std::ifstream in(path);
    if (!in) return rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line.rfind("config_hash", 0) == 0) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 12) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 12 fields, got " +
                              std::to_string(f.size()));
        }
        try {
            SweepRow r;
            r.config_hash = f[0];
            r.cell = {std::stoul(f[1]), std::stod(f[2]), std::stoul(f[3]), std::stod(f[5]), std::stoull(f[6])};
            r.epochs = std::stoul(f[7]);
            r.acc_discrete = std::stod(f[8]);
            r.acc_relaxed = std::stod(f[9]);
            r.acc_discrete_best = std::stod(f[10]);
            r.best_epoch = std::stoul(f[11]);
            rows.push_back(r);
        } catch (const std::logic_error&) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed number");
        }
    }
    return rows;
}

namespace {

struct CellData {
    BinaryDataset ds;
    std::string id;
};

CellData load_cell_data(const DataSource& src, std::size_t k) {
    CellData out;
    if (src.file) {
        auto full = load_dataset(*src.file);
        if (k > full.num_classes) {
            throw std::invalid_argument("dataset " + src.file->string() + " has only " +
                                        std::to_string(full.num_classes) + " classes, " + std::to_string(k) +
                                        " requested");
        }
        out.ds = take_classes(full, k);
    } else {
        SyntheticSpec spec = src.synthetic;
        spec.num_classes = k;
        out.ds = generate_synthetic(spec).data;
    }
    if (out.ds.splits.val.empty() && src.val_fraction > 0) {
        make_validation_split(out.ds, src.val_fraction, src.synthetic.seed);
    }
    out.id = out.ds.provenance + "|val=" + num(src.val_fraction);
    return out;
}

std::vector<std::size_t> plan_widths(const ModelSpec& m, std::size_t output_dim) {
    std::vector<std::size_t> w(m.layers - 1, m.width);
    w.push_back(output_dim);
    return w;
}

}  // namespace

std::vector<SweepRow> run_sweep(const ExperimentPlan& plan, const std::filesystem::path& csv_path,
                                std::size_t workers, std::ostream* log) {
    const auto cells = expand_plan(plan);
    const auto existing = read_sweep_csv(csv_path);
    std::set<std::string> done;
    for (const auto& r : existing) done.insert(r.config_hash);

    std::map<std::size_t, CellData> data;
    std::vector<std::pair<SweepCell, std::string>> todo;
    for (const auto& cell : cells) {
        if (!data.count(cell.classes)) data.emplace(cell.classes, load_cell_data(plan.data, cell.classes));
        auto h = cell_hash(plan, cell, data.at(cell.classes).id);
        if (done.insert(h).second) todo.emplace_back(cell, std::move(h));
    }
    if (log) *log << "sweep: " << cells.size() << " cells, " << todo.size() << " to run\n";

    const bool fresh = !std::filesystem::exists(csv_path) || std::filesystem::file_size(csv_path) == 0;
    if (!csv_path.parent_path().empty()) std::filesystem::create_directories(csv_path.parent_path());
    std::ofstream out(csv_path, std::ios::app);
    if (!out) throw std::runtime_error("cannot open " + csv_path.string() + " for appending");
    if (fresh) out << kSweepHeader << '\n' << std::flush;

    std::mutex writer;
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= todo.size()) return;
            {
                std::lock_guard lock(writer);
                if (failure) return;
            }
            try {
                const auto& [cell, hash] = todo[i];
                const auto& cd = data.at(cell.classes);
                const auto widths = plan_widths(plan.model, cell.output_dim);
                const auto net = build_network(cd.ds.dim(), widths, cell.seed);
                const auto res = train(net, cd.ds, cell_train_config(plan, cell));
                SweepRow row{hash, cell, res.record.epochs.size(), res.record.acc_discrete_test,
                             res.record.acc_relaxed_test, res.record.acc_discrete_test_best, res.record.best_epoch};
                std::lock_guard lock(writer);
                out << sweep_row_csv(row) << '\n' << std::flush;
                if (log) {
                    *log << "cell classes=" << cell.classes << " tau=" << num(cell.tau) << " out=" << cell.output_dim
                         << " dropout=" << num(cell.dropout) << " seed=" << cell.seed
                         << " acc_discrete=" << pct(row.acc_discrete) << '\n';
                }
            } catch (...) {
                std::lock_guard lock(writer);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };
    workers = std::max<std::size_t>(1, std::min(workers, todo.size()));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    out.close();
    if (failure) std::rethrow_exception(failure);
    return read_sweep_csv(csv_path);
}

namespace {

struct Agg {
    std::vector<double> disc, rel;
};

std::pair<double, double> mean_std(const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() < 2) return {m, 0.0};
    double ss = 0;
    for (double x : v) ss += (x - m) * (x - m);
    return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

using CellKey = std::tuple<std::size_t, std::size_t, double, double>;  // classes, output dim, tau, dropout

std::map<CellKey, Agg> aggregate(const std::vector<SweepRow>& rows) {
    std::map<CellKey, Agg> agg;
    for (const auto& r : rows) {
        auto& a = agg[{r.cell.classes, r.cell.output_dim, r.cell.tau, r.cell.dropout}];
        a.disc.push_back(r.acc_discrete);
        a.rel.push_back(r.acc_relaxed);
    }
    return agg;
}

}  // namespace

std::string sweep_summary_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os << "classes,tau,output_dim,neurons_per_class,dropout,runs,acc_discrete_mean,acc_discrete_std,"
          "acc_relaxed_mean,acc_relaxed_std\n";
    for (const auto& [key, a] : aggregate(rows)) {
        const auto [k, dim, tau, p] = key;
        const auto [dm, ds] = mean_std(a.disc);
        const auto [rm, rs] = mean_std(a.rel);
        os << k << ',' << num(tau) << ',' << dim << ',' << dim / k << ',' << num(p) << ',' << a.disc.size() << ','
           << pct(dm) << ',' << pct(ds) << ',' << pct(rm) << ',' << pct(rs) << '\n';
    }
    return os.str();
}

std::string best_tau_csv(const std::vector<SweepRow>& rows) {
    // (classes, neurons_per_class) -> (best mean, tau); ties keep the smaller tau.
    std::map<std::pair<std::size_t, std::size_t>, std::pair<double, double>> best;
    for (const auto& [key, a] : aggregate(rows)) {
        const auto [k, dim, tau, p] = key;
        if (p != 0.0) continue;
        const double m = mean_std(a.disc).first;
        auto it = best.find({k, dim / k});
        if (it == best.end() || m > it->second.first) best[{k, dim / k}] = {m, tau};
    }
    std::ostringstream os;
    os << "classes,neurons_per_class,best_tau,acc_discrete_mean\n";
    for (const auto& [key, v] : best) {
        os << key.first << ',' << key.second << ',' << num(v.second) << ',' << pct(v.first) << '\n';
    }
    return os.str();
}

std::vector<double> rate_histogram(const std::vector<double>& rates, std::size_t bins) {
    if (bins == 0) throw std::invalid_argument("histogram needs at least one bin");
    if (rates.empty()) throw std::invalid_argument("histogram of no rates");
    std::vector<double> counts(bins, 0.0);
    for (double r : rates) {
        if (!(r >= 0 && r <= 1)) throw std::invalid_argument("activation rate outside [0, 1]");
        const auto b = std::min(bins - 1, static_cast<std::size_t>(r * static_cast<double>(bins)));
        counts[b] += 1;
    }
    for (auto& c : counts) c = 100.0 * c / static_cast<double>(rates.size());
    return counts;
}

std::string histogram_csv(const std::vector<double>& percent) {
    std::ostringstream os;
    os << "bin,bin_lo,bin_hi,bin_center,percent\n";
    const double n = static_cast<double>(percent.size());
    for (std::size_t i = 0; i < percent.size(); ++i) {
        const double lo = static_cast<double>(i) / n, hi = static_cast<double>(i + 1) / n;
        os << i << ',' << num(lo) << ',' << num(hi) << ',' << num((lo + hi) / 2) << ',' << num(percent[i]) << '\n';
    }
    return os.str();
}

double extreme_rate_mass(const std::vector<double>& rates) {
    if (rates.empty()) return 0;
    std::size_t n = 0;
    for (double r : rates) n += r <= 0.02 || (r >= 0.48 && r <= 0.52) || r >= 0.98;
    return static_cast<double>(n) / static_cast<double>(rates.size());
}

// ---- command line ----------------------------------------------------------

namespace {

std::filesystem::path default_out_dir() {
    const char* env = std::getenv("DLGN_OUT_DIR");
    return env && *env ? std::filesystem::path(env) : std::filesystem::path(".");
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw std::invalid_argument("unknown split '" + s + "' (train, val, test)");
}

void warn_width(std::size_t width) {
    if (width > kDeskWidthLimit) {
        std::cerr << "warning: width " << width << " is beyond desk scale (" << kDeskWidthLimit
                  << "); expect long runtimes and large memory use\n";
    }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

// Head options shared by train, eval, prune and activation-hist.
struct HeadOpts {
    std::string kind = "group-sum";
    double tau = 10.0;
    double dropout = 0.0;
    std::string dropout_scope = "batch";
    bool dropout_rescale = false;
    std::size_t code_bits = 16;
    std::uint64_t code_seed = 0;
    std::size_t classes = 0;
    std::size_t outputs = 0;

    void add(CLI::App* app, bool training) {
        app->add_option("--tau", tau, "Group-Sum temperature")->check(CLI::PositiveNumber);
        app->add_option("--classes", classes, "number of classes (default: from the dataset)");
        if (!training) {
            app->add_option("--outputs", outputs, "head width when the model carries no head");
            return;
        }
        app->add_option("--head", kind, "group-sum, binary-logit or codebook")
            ->check(CLI::IsMember({"group-sum", "binary-logit", "codebook"}));
        app->add_option("--dropout", dropout, "Group-Sum dropout probability")->check(CLI::Range(0.0, 0.999));
        app->add_option("--dropout-scope", dropout_scope, "batch or sample")
            ->check(CLI::IsMember({"batch", "sample"}));
        app->add_flag("--dropout-rescale", dropout_rescale, "scale kept outputs by 1/(1-p)");
        app->add_option("--code-bits", code_bits, "codebook length o");
        app->add_option("--code-seed", code_seed, "codebook seed");
    }

    HeadConfig build(std::size_t n, std::size_t k) const {
        HeadConfig h;
        if (kind == "group-sum") {
            h = make_group_sum_head(n, k, tau, dropout);
        } else if (kind == "binary-logit") {
            h = make_binary_logit_head(n, k, tau);
            h.dropout_p = dropout;
        } else {
            std::optional<CodeReduction> red;
            if (n != code_bits) red = CodeReduction{n, static_cast<double>(n / code_bits)};
            h = make_codebook_head(codebook_generate(k, code_bits, code_seed, red), tau, dropout);
        }
        h.dropout_rescale = dropout_rescale;
        h.dropout_scope = dropout_scope == "sample" ? DropoutScope::PerSample : DropoutScope::PerBatch;
        h.validate();
        return h;
    }
};

// A model for evaluation: a checkpoint (with or without head) or a netlist.
struct LoadedModel {
    std::optional<LogicNetwork> net;
    DiscreteCircuit circuit;
    std::optional<HeadConfig> head;
};

LoadedModel load_model(const std::string& model, const std::string& circuit) {
    if (model.empty() == circuit.empty()) throw std::invalid_argument("give exactly one of --model or --circuit");
    LoadedModel m;
    if (!model.empty()) {
        auto ck = read_checkpoint(model);
        m.circuit = harden(ck.net);
        m.net = std::move(ck.net);
        m.head = std::move(ck.head);
    } else {
        m.circuit = import_netlist(circuit);
    }
    return m;
}

HeadConfig resolve_eval_head(const LoadedModel& m, const HeadOpts& o, const BinaryDataset& ds) {
    if (m.head && o.classes == 0 && o.outputs == 0) return *m.head;
    std::size_t n = o.outputs;
    if (n == 0) {
        n = m.net ? m.net->output_dim()
                  : *std::max_element(m.circuit.output_origin.begin(), m.circuit.output_origin.end()) + 1;
    }
    const std::size_t k = o.classes ? o.classes : (m.head ? m.head->k : ds.num_classes);
    return make_group_sum_head(n, k, o.tau);
}

std::vector<std::uint32_t> split_rows(const BinaryDataset& ds, const std::string& split) {
    if (split == "all") {
        std::vector<std::uint32_t> rows(ds.size());
        std::iota(rows.begin(), rows.end(), 0u);
        return rows;
    }
    return ds.indices(parse_split(split));
}

int cmd_datagen(const SyntheticSpec& spec, double val_fraction, const std::string& out_arg,
                const std::filesystem::path& out_dir, const std::vector<std::string>& idx,
                const std::string& name, const std::vector<std::string>& concat, std::size_t take) {
    BinaryDataset ds;
    std::string sidecar;
    std::filesystem::path out;
    if (!concat.empty()) {
        std::vector<BinaryDataset> parts;
        for (const auto& f : concat) parts.push_back(load_dataset(f));
        ds = concat_datasets(parts);
        out = out_arg.empty() ? out_dir / "concat.dlgn" : std::filesystem::path(out_arg);
    } else if (!idx.empty()) {
        if (idx.size() != 4) throw std::invalid_argument("--idx needs train-images train-labels test-images test-labels");
        const auto tr = load_idx(idx[0], idx[1]);
        const auto te = load_idx(idx[2], idx[3]);
        std::uint32_t max_label = 0;
        for (auto l : tr.labels) max_label = std::max(max_label, l);
        for (auto l : te.labels) max_label = std::max(max_label, l);
        ds = dataset_from_images(tr, te, max_label + 1, name);
        if (val_fraction > 0) make_validation_split(ds, val_fraction, spec.seed);
        out = out_arg.empty() ? out_dir / (name + ".dlgn") : std::filesystem::path(out_arg);
    } else {
        auto syn = generate_synthetic(spec);
        ds = std::move(syn.data);
        if (val_fraction > 0) make_validation_split(ds, val_fraction, spec.seed);
        sidecar = signatures_json(spec, syn.classes);
        out = out_arg.empty() ? out_dir / ("synthetic_k" + std::to_string(spec.num_classes) + "_s" +
                                           std::to_string(spec.seed) + ".dlgn")
                              : std::filesystem::path(out_arg);
    }
    if (take) ds = take_classes(ds, take);
    if (!out.parent_path().empty()) std::filesystem::create_directories(out.parent_path());
    save_dataset(out, ds);
    if (!sidecar.empty()) write_text(out.string() + ".classes.json", sidecar + "\n");
    if (!ds.label_map.empty()) write_text(out.string() + ".labels.csv", label_map_csv(ds));
    std::cout << "dataset," << out.string() << ",samples," << ds.size() << ",dim," << ds.dim() << ",classes,"
              << ds.num_classes << ",train," << ds.splits.train.size() << ",val," << ds.splits.val.size()
              << ",test," << ds.splits.test.size() << '\n';
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Differentiable logic gate networks: train, evaluate, compile, prune and sweep"};
    app.set_config("--config", "", "INI/TOML file with option overrides");
    app.require_subcommand(1);
    app.fallthrough();
    std::filesystem::path out_dir = default_out_dir();
    app.add_option("--out-dir", out_dir, "output directory (default $DLGN_OUT_DIR or .)");
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "no progress output");

    // datagen
    auto* gen = app.add_subcommand("datagen", "write a dataset file (synthetic, IDX import or concatenation)");
    SyntheticSpec spec;
    double val_fraction = 0.2;
    std::string gen_out, idx_name = "idx";
    std::vector<std::string> idx_files, concat_files;
    std::size_t take = 0;
    gen->add_option("--classes", spec.num_classes, "number of classes")->check(CLI::Range(2, 1 << 20));
    gen->add_option("--dim", spec.dim, "bits per sample");
    gen->add_option("--fixed-min", spec.fixed_bits_min, "fewest fixed bits per class");
    gen->add_option("--fixed-max", spec.fixed_bits_max, "most fixed bits per class");
    gen->add_option("--per-class", spec.samples_per_class, "samples per class");
    gen->add_option("--seed", spec.seed, "generator and split seed");
    gen->add_option("--test-fraction", spec.test_fraction, "per-class test share")->check(CLI::Range(0.0, 0.99));
    gen->add_option("--val-fraction", val_fraction, "share of train moved to validation")->check(CLI::Range(0.0, 0.99));
    gen->add_option("--idx", idx_files, "train-images train-labels test-images test-labels")->expected(4);
    gen->add_option("--name", idx_name, "dataset name for IDX imports");
    gen->add_option("--concat", concat_files, "dataset files to concatenate (labels are offset)");
    gen->add_option("--take-classes", take, "keep only labels below this");
    gen->add_option("-o,--out", gen_out, "output file");

    // train
    auto* tr = app.add_subcommand("train", "train a network and write checkpoints and CSV records");
    std::string data_path, run_name = "run";
    ModelSpec model;
    std::size_t outputs = 0;
    std::uint64_t net_seed = 0;
    bool net_seed_set = false;
    TrainConfig tc;
    HeadOpts train_head;
    tr->add_option("--data", data_path, "dataset file")->required();
    tr->add_option("--layers", model.layers, "layers including the output layer")->check(CLI::PositiveNumber);
    tr->add_option("--width", model.width, "neurons per hidden layer")->check(CLI::PositiveNumber);
    tr->add_option("--outputs", outputs, "output layer width (default: largest multiple of classes <= width)");
    train_head.add(tr, true);
    tr->add_option("--lr", tc.lr, "Adam learning rate");
    tr->add_option("--epochs", tc.epochs, "training epochs");
    tr->add_option("--batch-size", tc.batch_size, "samples per step");
    tr->add_option("--seed", tc.seed, "batch order and dropout seed");
    tr->add_option("--net-seed", net_seed, "wiring and initialisation seed (default: --seed)")
        ->each([&](const std::string&) { net_seed_set = true; });
    tr->add_option("--eval-every", tc.eval_every, "validation cadence in epochs");
    tr->add_flag("--continuous", tc.continuous_inputs, "train on real-valued inputs");
    tr->add_option("--name", run_name, "file name prefix for outputs");

    // eval
    auto* ev = app.add_subcommand("eval", "accuracy of a checkpoint or netlist");
    std::string model_path, circuit_path, split = "test", mode = "discrete";
    HeadOpts eval_head;
    ev->add_option("--model", model_path, "checkpoint");
    ev->add_option("--circuit", circuit_path, "netlist");
    ev->add_option("--data", data_path, "dataset file")->required();
    ev->add_option("--split", split, "train, val or test");
    ev->add_option("--mode", mode, "discrete or relaxed")->check(CLI::IsMember({"discrete", "relaxed"}));
    eval_head.add(ev, false);

    // compile
    auto* co = app.add_subcommand("compile", "harden a checkpoint into a netlist");
    std::string net_out;
    std::size_t keep = 0;
    std::uint64_t prune_seed = 0;
    bool eliminate = false;
    co->add_option("--model", model_path, "checkpoint")->required();
    co->add_option("-o,--out", net_out, "netlist file")->required();
    co->add_option("--keep-per-class", keep, "prune to this many outputs per class first");
    co->add_option("--seed", prune_seed, "pruning seed");
    co->add_flag("--eliminate", eliminate, "drop gates no kept output depends on");
    HeadOpts compile_head;
    compile_head.add(co, false);

    // prune
    auto* pr = app.add_subcommand("prune", "accuracy and prune fraction as outputs per class shrink");
    std::vector<std::size_t> keeps;
    std::string prune_out;
    HeadOpts prune_head;
    pr->add_option("--model", model_path, "checkpoint")->required();
    pr->add_option("--data", data_path, "dataset file")->required();
    pr->add_option("--keep", keeps, "kept outputs per class (default: group size halved down to 1)")
        ->delimiter(',');
    pr->add_option("--seed", prune_seed, "pruning seed");
    pr->add_option("--split", split, "train, val or test");
    pr->add_option("-o,--out", prune_out, "CSV file (default stdout)");
    prune_head.add(pr, false);

    // sweep
    auto* sw = app.add_subcommand("sweep", "Cartesian sweep over classes, tau, output width, dropout and seeds");
    ExperimentPlan plan;
    plan.output_dims.clear();
    std::string sweep_csv = "sweep.csv";
    std::size_t workers = 1;
    std::string sweep_data;
    sw->add_option("--data", sweep_data, "dataset file (default: synthetic per class count)");
    sw->add_option("--dim", plan.data.synthetic.dim, "synthetic bits per sample");
    sw->add_option("--per-class", plan.data.synthetic.samples_per_class, "synthetic samples per class");
    sw->add_option("--data-seed", plan.data.synthetic.seed, "synthetic data and validation split seed");
    sw->add_option("--val-fraction", plan.data.val_fraction, "validation share of train");
    sw->add_option("--layers", plan.model.layers, "layers including the output layer");
    sw->add_option("--width", plan.model.width, "neurons per hidden layer");
    sw->add_option("--classes", plan.classes, "class counts")->delimiter(',');
    sw->add_option("--tau", plan.taus, "temperatures")->delimiter(',');
    sw->add_option("--outputs", plan.output_dims, "output widths (rounded down to a multiple of classes)")
        ->delimiter(',');
    sw->add_option("--neurons-per-class", plan.neurons_per_class, "output neurons per class")->delimiter(',');
    sw->add_option("--dropout", plan.dropouts, "Group-Sum dropout probabilities")->delimiter(',');
    sw->add_option("--seeds", plan.seeds, "seeds")->delimiter(',');
    sw->add_option("--lr", plan.train.lr, "Adam learning rate");
    sw->add_option("--epochs", plan.train.epochs, "training epochs");
    sw->add_option("--batch-size", plan.train.batch_size, "samples per step");
    sw->add_option("--eval-every", plan.train.eval_every, "validation cadence in epochs");
    sw->add_option("--workers", workers, "cells trained concurrently")->check(CLI::PositiveNumber);
    sw->add_option("-o,--out", sweep_csv, "row CSV inside --out-dir; summary and best-tau files sit beside it");

    // activation-hist
    auto* ah = app.add_subcommand("activation-hist", "histogram of discrete output activation rates");
    std::size_t bins = 100;
    std::string hist_out;
    split = "test";
    ah->add_option("--model", model_path, "checkpoint");
    ah->add_option("--circuit", circuit_path, "netlist");
    ah->add_option("--data", data_path, "dataset file")->required();
    ah->add_option("--split", split, "train, val, test or all");
    ah->add_option("--bins", bins, "number of bins")->check(CLI::PositiveNumber);
    ah->add_option("-o,--out", hist_out, "CSV file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*gen) {
            return cmd_datagen(spec, val_fraction, gen_out, out_dir, idx_files, idx_name, concat_files, take);
        }
        if (*tr) {
            const auto ds = load_dataset(data_path);
            const std::size_t k = train_head.classes ? train_head.classes : ds.num_classes;
            const std::size_t n = outputs ? outputs : std::max<std::size_t>(model.width / k * k, k);
            warn_width(model.width);
            tc.head = train_head.build(n, k);
            auto widths = plan_widths(model, n);
            const auto net = build_network(ds.dim(), widths, net_seed_set ? net_seed : tc.seed);
            const auto res = train(net, ds, tc, [&](const EpochRecord& e) {
                if (quiet) return;
                std::cerr << "epoch " << e.epoch << " loss " << e.train_loss;
                if (e.acc_discrete_val) std::cerr << " val_discrete " << pct(*e.acc_discrete_val);
                if (e.acc_relaxed_val) std::cerr << " val_relaxed " << pct(*e.acc_relaxed_val);
                std::cerr << '\n';
            });
            std::filesystem::create_directories(out_dir);
            write_checkpoint(out_dir / (run_name + ".ckpt"), res.net, &tc.head);
            write_checkpoint(out_dir / (run_name + ".best.ckpt"), res.best_net, &tc.head);
            write_text(out_dir / (run_name + ".epochs.csv"), run_record_csv(res.record));
            write_text(out_dir / (run_name + ".summary.csv"), run_summary_csv(res.record));
            std::cout << run_summary_csv(res.record);
            return 0;
        }
        if (*ev) {
            const auto ds = load_dataset(data_path);
            const auto m = load_model(model_path, circuit_path);
            const auto head = resolve_eval_head(m, eval_head, ds);
            double acc;
            if (mode == "relaxed") {
                if (!m.net) throw std::invalid_argument("relaxed evaluation needs a checkpoint, not a netlist");
                acc = evaluate(*m.net, ds, parse_split(split), EvalMode::Relaxed, head);
            } else {
                acc = evaluate_circuit(m.circuit, ds, parse_split(split), head);
            }
            std::cout << "split,mode,accuracy\n" << split << ',' << mode << ',' << pct(acc) << '\n';
            return 0;
        }
        if (*co) {
            const auto ck = read_checkpoint(model_path);
            auto circ = harden(ck.net);
            double frac = 0;
            if (keep) {
                const LoadedModel lm{ck.net, circ, ck.head};
                BinaryDataset none;
                none.num_classes = ck.head ? ck.head->k : compile_head.classes;
                const auto head = resolve_eval_head(lm, compile_head, none);
                circ = prune_outputs(circ, keep, head.group_sum(), prune_seed);
            }
            if (eliminate) {
                auto e = reachability_eliminate(circ);
                circ = std::move(e.circuit);
                frac = e.pruned_fraction;
            }
            export_netlist(circ, net_out);
            std::cout << "gates,kept_outputs,pruned_fraction\n"
                      << circ.num_gates() << ',' << circ.num_kept() << ',' << num(frac) << '\n';
            return 0;
        }
        if (*pr) {
            const auto ds = load_dataset(data_path);
            const auto ck = read_checkpoint(model_path);
            const LoadedModel lm{ck.net, harden(ck.net), ck.head};
            const auto head = resolve_eval_head(lm, prune_head, ds);
            if (head.kind == HeadKind::Codebook) throw std::invalid_argument("pruning needs a Group-Sum head");
            const auto gs = head.group_sum();
            if (keeps.empty()) {
                for (std::size_t g = gs.group_size(); g >= 1; g /= 2) keeps.push_back(g);
            }
            std::sort(keeps.rbegin(), keeps.rend());
            const std::string hash = hex64(fnv1a(hex64(fingerprint(ck.net)) + ";prune_seed=" + std::to_string(prune_seed)));
            std::ostringstream os;
            os << "classes,tau,neurons_per_class,kept_per_class,acc_discrete,pruned_fraction,config_hash\n";
            for (auto kpc : keeps) {
                const auto pruned = prune_outputs(lm.circuit, kpc, gs, prune_seed);
                const auto e = reachability_eliminate(pruned);
                const double acc = evaluate_circuit(e.circuit, ds, parse_split(split), head);
                os << head.k << ',' << num(head.tau) << ',' << gs.group_size() << ',' << kpc << ',' << pct(acc) << ','
                   << num(e.pruned_fraction) << ',' << hash << '\n';
            }
            if (prune_out.empty()) {
                std::cout << os.str();
            } else {
                write_text(out_dir / prune_out, os.str());
            }
            return 0;
        }
        if (*sw) {
            if (!sweep_data.empty()) plan.data.file = sweep_data;
            if (plan.output_dims.empty() && plan.neurons_per_class.empty()) plan.output_dims = {plan.model.width};
            warn_width(plan.model.width);
            plan.out_dir = out_dir;
            const auto csv = out_dir / sweep_csv;
            const auto rows = run_sweep(plan, csv, workers, quiet ? nullptr : &std::cerr);
            auto stem = csv;
            stem.replace_extension();
            write_text(stem.string() + ".summary.csv", sweep_summary_csv(rows));
            write_text(stem.string() + ".best_tau.csv", best_tau_csv(rows));
            std::cout << sweep_summary_csv(rows);
            return 0;
        }
        if (*ah) {
            const auto ds = load_dataset(data_path);
            const auto m = load_model(model_path, circuit_path);
            const auto rates = activation_rates(m.circuit, ds, split_rows(ds, split));
            const auto text = histogram_csv(rate_histogram(rates, bins));
            if (hist_out.empty()) {
                std::cout << text;
            } else {
                write_text(out_dir / hist_out, text);
                std::cout << "extreme_mass," << num(extreme_rate_mass(rates)) << '\n';
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

}  // namespace dlgn
