// editcert: certified classification of token sequences under edit-distance
// attacks via randomized deletion smoothing.

#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "editcert/cli/commands.hpp"

namespace {

using namespace editcert;
using namespace editcert::cli;

std::vector<double> parse_csv_doubles(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (item.empty() || used != item.size()) throw UsageError("bad number in list: '" + item + "'");
        out.push_back(v);
    }
    return out;
}

std::vector<std::uint64_t> parse_grid(const std::string& text) {
    std::vector<std::uint64_t> out;
    for (double v : parse_csv_doubles(text)) {
        if (v < 0 || v != static_cast<double>(static_cast<std::uint64_t>(v)))
            throw UsageError("radius grid entries must be nonnegative integers");
        out.push_back(static_cast<std::uint64_t>(v));
    }
    return out;
}

std::vector<std::uint8_t> parse_hex_bytes(const std::string& text) {
    if (text.size() % 2 != 0 || text.empty()) throw UsageError("motif must be an even-length hex string");
    std::vector<std::uint8_t> out;
    for (std::size_t i = 0; i < text.size(); i += 2) {
        std::size_t used = 0;
        int v = 0;
        try {
            v = std::stoi(text.substr(i, 2), &used, 16);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != 2) throw UsageError("bad hex in motif: " + text);
        out.push_back(static_cast<std::uint8_t>(v));
    }
    return out;
}

// Splices "--config FILE" into the argument list: each key=value line
// becomes "--key value" unless the command line already sets --key.
// "key=true" adds a bare flag and "key=false" is dropped.
std::vector<std::string> expand_config(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    std::string file;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            file = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            file = args[i].substr(9);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
            break;
        }
    }
    if (file.empty()) return args;
    std::ifstream in(file);
    if (!in) throw InputError("cannot open config file " + file);
    auto given = [&](const std::string& flag) {
        for (const auto& a : args)
            if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
        return false;
    };
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string line;
    std::vector<std::string> extra;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#' || line[0] == ';' || line[0] == '[') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw UsageError("config line without '=': " + line);
        const std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        const std::string flag = "--" + key;
        if (key.empty() || given(flag)) continue;
        if (value == "true") {
            extra.push_back(flag);
        } else if (value != "false") {
            extra.push_back(flag);
            extra.push_back(value);
        }
    }
    args.insert(args.end(), extra.begin(), extra.end());
    return args;
}

Mechanism make_mechanism(const std::string& kind, double p) {
    try {
        if (kind == "del") return DeletionMechanism(p);
        if (kind == "abn") return AblationMechanism(p);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    throw UsageError("unknown mechanism '" + kind + "' (use del or abn)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"editcert: randomized-deletion smoothing with edit-distance certificates"};
    app.require_subcommand(1);

    // gen
    GenOptions gen;
    std::string gen_motif = "07aa55c3";
    auto* gen_cmd = app.add_subcommand("gen", "write a seeded planted-motif corpus with manifest.csv");
    gen_cmd->add_option("--out", gen.out_dir, "output directory")->required();
    gen_cmd->add_option("--count", gen.count, "number of sequences")->capture_default_str();
    gen_cmd->add_option("--seed", gen.seed, "corpus seed")->capture_default_str();
    gen_cmd->add_option("--min-len", gen.min_len)->capture_default_str();
    gen_cmd->add_option("--max-len", gen.max_len)->capture_default_str();
    gen_cmd->add_option("--class1-fraction", gen.class1_fraction)->capture_default_str();
    gen_cmd->add_option("--motif", gen_motif, "motif bytes as hex")->capture_default_str();
    gen_cmd->add_option("--motif-share", gen.motif_share, "minimum motif fraction of class-1 sequences")
        ->capture_default_str();
    gen_cmd->add_option("--chunk-width", gen.chunk_width, "also write fixed-width chunk maps (0: off)")
        ->capture_default_str();

    // train
    TrainOptions train;
    double train_p = 0.99;
    std::string train_mech = "del";
    bool train_clean = false;
    auto* train_cmd = app.add_subcommand("train", "fit a histogram model on perturbed sequences");
    train_cmd->add_option("--manifest", train.manifest)->required();
    train_cmd->add_option("--model", train.model_out, "output model path")->required();
    train_cmd->add_option("--p-del", train_p, "perturbation strength during training")->capture_default_str();
    train_cmd->add_option("--mechanism", train_mech, "del or abn")->capture_default_str();
    train_cmd->add_flag("--clean", train_clean, "train on unperturbed sequences");
    train_cmd->add_option("--epochs", train.train.epochs)->capture_default_str();
    train_cmd->add_option("--lr", train.train.learning_rate)->capture_default_str();
    train_cmd->add_option("--batch", train.train.batch_size)->capture_default_str();
    train_cmd->add_option("--l2", train.train.l2)->capture_default_str();
    train_cmd->add_option("--min-preserved", train.train.min_preserved)->capture_default_str();
    train_cmd->add_option("--seed", train.seed)->capture_default_str();

    // calibrate
    CalibrateOptions cal;
    double cal_p = 0.99;
    std::string cal_mech = "del";
    std::string cal_eta = "0,0";
    bool cal_base = false;
    auto* cal_cmd = app.add_subcommand("calibrate", "set the model threshold to a target benign FPR");
    cal_cmd->add_option("--manifest", cal.manifest, "validation manifest (label 0 = benign)")->required();
    cal_cmd->add_option("--model", cal.model)->required();
    cal_cmd->add_option("--out", cal.model_out, "output model (default: overwrite --model)");
    cal_cmd->add_option("--target-fpr", cal.target_fpr)->capture_default_str();
    cal_cmd->add_flag("--base", cal_base, "calibrate the raw base model instead of the smoothed one");
    cal_cmd->add_option("--p-del", cal_p)->capture_default_str();
    cal_cmd->add_option("--mechanism", cal_mech)->capture_default_str();
    cal_cmd->add_option("--samples", cal.smoothing.samples, "perturbations per sequence")->capture_default_str();
    cal_cmd->add_option("--eta", cal_eta, "decision thresholds")->capture_default_str();
    cal_cmd->add_option("--seed", cal.smoothing.seed)->capture_default_str();

    // certify
    CertifyOptions cert;
    std::string cert_model, cert_mech = "del", cert_eta, cert_ops = "del+ins+sub", cert_chunk_dict;
    double cert_p = 0.99;
    auto* cert_cmd = app.add_subcommand("certify", "certify every manifest row, writing JSON-lines records");
    cert_cmd->add_option("--manifest", cert.manifest)->required();
    auto* model_opt = cert_cmd->add_option("--model", cert_model, "histogram model file");
    auto* endpoint_opt = cert_cmd->add_option("--endpoint", cert.endpoint, "http://host:port[/path] or a shell command");
    model_opt->excludes(endpoint_opt);
    cert_cmd->add_option("--num-classes", cert.num_classes, "class count for endpoints")->capture_default_str();
    cert_cmd->add_option("--chunk-dict", cert_chunk_dict, "chunk dictionary (default: <model>.chunks)");
    cert_cmd->add_option("--p-del", cert_p, "perturbation strength")->capture_default_str();
    cert_cmd->add_option("--mechanism", cert_mech, "del or abn")->capture_default_str();
    cert_cmd->add_option("--n-pred", cert.config.n_pred)->capture_default_str();
    cert_cmd->add_option("--n-bnd", cert.config.n_bnd)->capture_default_str();
    cert_cmd->add_option("--alpha", cert.config.alpha)->capture_default_str();
    cert_cmd->add_option("--eta", cert_eta, "per-class decision thresholds (default all 0)");
    cert_cmd->add_option("--ops", cert_ops, "op sets, ';'-separated, e.g. del,ins,sub;sub")->capture_default_str();
    cert_cmd->add_option("--seed", cert.seed)->capture_default_str();
    cert_cmd->add_option("--threads", cert.threads)->capture_default_str();
    cert_cmd->add_option("--out", cert.out, "records output (JSON lines)")->required();
    cert_cmd->add_flag("--timing", cert.timing, "add elapsed_ms to each record");

    // metrics
    MetricsOptions met;
    std::string met_grid;
    std::string met_csv;
    auto* met_cmd = app.add_subcommand("metrics", "accuracy and certified-accuracy report");
    met_cmd->add_option("--records", met.records)->required();
    met_cmd->add_option("--manifest", met.manifest, "labels")->required();
    met_cmd->add_option("--grid", met_grid, "radius grid, comma-separated (default 0,1,2,4,...,1024)");
    met_cmd->add_option("--ops", met.ops, "op set to report (default del+ins+sub)");
    met_cmd->add_option("--csv", met_csv, "also write the curve as CSV");

    // verify
    VerifyOptions ver;
    std::string ver_ops = "del+ins+sub";
    auto* ver_cmd = app.add_subcommand("verify", "exhaustively check certificates on small random instances");
    ver_cmd->add_option("--trials", ver.trials)->capture_default_str();
    ver_cmd->add_option("--alphabet", ver.alphabet)->capture_default_str();
    ver_cmd->add_option("--length", ver.length)->capture_default_str();
    ver_cmd->add_option("--p-del", ver.p_del)->capture_default_str();
    ver_cmd->add_option("--ops", ver_ops)->capture_default_str();
    ver_cmd->add_option("--seed", ver.seed)->capture_default_str();
    ver_cmd->add_option("--bias-low", ver.bias_low)->capture_default_str();
    ver_cmd->add_flag("--verbose", ver.verbose, "print every trial");

    std::string config_help;
    for (auto* sub : {gen_cmd, train_cmd, cal_cmd, cert_cmd, met_cmd, ver_cmd})
        sub->add_option("--config", config_help, "key=value file supplying option defaults; flags win");

    std::vector<std::string> args;
    try {
        args = expand_config(argc, argv);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    }
    std::vector<char*> cargs;
    for (auto& a : args) cargs.push_back(a.data());

    try {
        app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*gen_cmd) {
            gen.motif = parse_hex_bytes(gen_motif);
            return cmd_gen(gen, std::cout);
        }
        if (*train_cmd) {
            if (!train_clean) train.train.mechanism = make_mechanism(train_mech, train_p);
            return cmd_train(train, std::cout);
        }
        if (*cal_cmd) {
            cal.smoothed = !cal_base;
            cal.smoothing.mechanism = make_mechanism(cal_mech, cal_p);
            cal.smoothing.eta = parse_csv_doubles(cal_eta);
            return cmd_calibrate(cal, std::cout);
        }
        if (*cert_cmd) {
            if (!cert_model.empty()) cert.model = cert_model;
            if (!cert_chunk_dict.empty()) cert.chunk_dict = cert_chunk_dict;
            cert.config.mechanism = make_mechanism(cert_mech, cert_p);
            const std::size_t k = cert.model ? 2 : cert.num_classes;
            cert.config.eta = cert_eta.empty() ? std::vector<double>(k, 0.0) : parse_csv_doubles(cert_eta);
            try {
                cert.ops = parse_op_set_list(cert_ops);
                cert.config.validate();
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
            return cmd_certify(cert, std::cerr);
        }
        if (*met_cmd) {
            if (!met_grid.empty()) met.grid = parse_grid(met_grid);
            if (!met_csv.empty()) met.csv_out = met_csv;
            return cmd_metrics(met, std::cout);
        }
        if (*ver_cmd) {
            try {
                ver.ops = EditOpSet::parse(ver_ops);
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
            return cmd_verify(ver, std::cout);
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    }
    return kExitUsage;
}
