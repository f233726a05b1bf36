#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ssa/compressor.hpp"
#include "ssa/errors.hpp"
#include "ssa/gradients.hpp"
#include "ssa/io.hpp"
#include "ssa/model.hpp"
#include "ssa/rng.hpp"
#include "ssa/synthetic.hpp"
#include "ssa/trainer.hpp"

namespace {

struct CompressArgs {
    std::string input;
    std::string output;
    std::string params_path;
    std::string assignments_path;
    std::size_t slots = 32;
    std::size_t top_k = 2;
    std::uint64_t seed = 1;
    bool stats = false;
    bool slots_explicit = false;
};

struct TrainArgs {
    std::size_t slots = 32;
    std::size_t top_k = 2;
    double lambda = 0.1;
    std::uint64_t seed = 1;
    std::size_t epochs = 10;
    double lr = 1e-3;
    std::size_t batch = 8;
    std::size_t hidden_dim = 0;
    std::size_t out_dim = 0;
    ssa::SyntheticBagConfig data;
    std::string report_path;
    std::string params_path;
};

struct GradcheckArgs {
    std::uint64_t seed = 1;
    std::size_t n = 64;
    std::size_t d = 8;
    std::size_t slots = 4;
    std::size_t classes = 3;
    std::size_t bags = 2;
    std::size_t top_k = 2;
    double tol = 1e-4;
    double h = 1e-5;
};

std::string fmt(const char* spec, double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

int run_compress(const CompressArgs& args) {
    const ssa::DenseMatrix input = ssa::read_feature_file(args.input);

    ssa::ModelParams params;
    if (!args.params_path.empty()) {
        params = ssa::read_model_params(args.params_path);
        if (args.slots_explicit && params.gate.weight.rows() != args.slots)
            throw ssa::InvalidConfigError(
                "--slots conflicts with the loaded model (" +
                std::to_string(params.gate.weight.rows()) + " slots)");
    } else {
        const std::size_t dim = input.cols();
        const ssa::ModelDims dims{dim, args.slots, 2 * dim, dim, 2};
        ssa::RngState rng = ssa::RngState::scoped(args.seed, "init");
        params = ssa::init_model_params(dims, true, ssa::Activation::gelu,
                                        false, rng);
    }

    const ssa::CompressConfig config{args.top_k};
    const std::vector<ssa::CompressedItem> items =
        ssa::compress({input}, params, config);
    const ssa::CompressedItem& item = items.front();

    ssa::write_feature_file(args.output, item.tokens.tokens);
    if (!args.assignments_path.empty())
        ssa::write_assignments(args.assignments_path, item.table);

    if (args.stats) {
        const double n = static_cast<double>(input.rows());
        const double k = static_cast<double>(item.tokens.tokens.rows());
        double max_load = 0.0;
        for (double f : item.stats.load) max_load = std::max(max_load, f);
        std::cout << "n_patches=" << input.rows() << '\n';
        std::cout << "n_slots=" << item.tokens.tokens.rows() << '\n';
        std::cout << "ratio=" << fmt("%.1f", n / k) << '\n';
        std::cout << "max_load=" << fmt("%.9g", max_load) << '\n';
        std::cout << "load=";
        for (std::size_t i = 0; i < item.stats.load.size(); ++i) {
            if (i > 0) std::cout << ',';
            std::cout << fmt("%.9g", item.stats.load[i]);
        }
        std::cout << '\n';
    }
    return 0;
}

int run_train(const TrainArgs& args) {
    const ssa::DatasetSplits data =
        ssa::generate_synthetic_bags(args.data, args.seed);

    ssa::TrainConfig config;
    config.n_slots = args.slots;
    config.top_k = args.top_k;
    config.hidden_dim = args.hidden_dim;
    config.out_dim = args.out_dim;
    config.lr = args.lr;
    config.epochs = args.epochs;
    config.batch_size = args.batch;
    config.seed = args.seed;
    config.constants.lambda = args.lambda;

    const ssa::TrainResult result = ssa::train(data, config);

    if (!args.report_path.empty())
        ssa::write_train_report(args.report_path, result.report);
    if (!args.params_path.empty())
        ssa::write_model_params(args.params_path, result.params);

    std::cout << "final val_accuracy="
              << fmt("%.9g", result.report.final_val_accuracy)
              << " test_accuracy="
              << fmt("%.9g", result.report.final_test_accuracy)
              << " max_load=" << fmt("%.9g", result.report.final_max_load)
              << '\n';
    std::cout << "diverged=" << (result.report.diverged ? 1 : 0) << '\n';
    return result.report.diverged ? 3 : 0;
}

int run_gradcheck(const GradcheckArgs& args) {
    const ssa::RandomInstance instance = ssa::make_random_instance(
        args.seed, args.bags, args.n, args.d, args.slots, args.classes);

    ssa::PipelineCheckConfig config;
    config.top_k = args.top_k;
    config.h = args.h;
    config.rel_tol = args.tol;
    const ssa::CheckReport report = ssa::check_pipeline_gradients(
        instance.items, instance.labels, instance.params, config);

    std::cout << "coordinates=" << report.total << '\n';
    std::cout << "boundary_flagged=" << report.flagged << '\n';
    std::cout << "max_rel_error=" << fmt("%.3e", report.max_rel_error) << '\n';
    for (const auto& entry : report.worst)
        std::cout << "worst index=" << entry.index
                  << " analytic=" << fmt("%.9g", entry.analytic)
                  << " numeric=" << fmt("%.9g", entry.numeric)
                  << " rel_error=" << fmt("%.3e", entry.rel_error) << '\n';
    std::cout << (report.passed ? "PASS" : "FAIL") << '\n';
    return report.passed ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse slot compressor: route patch features into a fixed "
                 "token budget"};
    app.require_subcommand(1);

    CompressArgs compress_args;
    CLI::App* compress =
        app.add_subcommand("compress", "Compress a feature file into K slot "
                                       "tokens");
    compress->add_option("--input", compress_args.input, "Input feature file")
        ->required();
    compress->add_option("--output", compress_args.output,
                         "Output feature file (K rows)")
        ->required();
    compress->add_option("--params", compress_args.params_path,
                         "Trained model file; omitted means a fresh "
                         "seed-initialized model");
    compress
        ->add_option("--slots", compress_args.slots, "Slot count K")
        ->capture_default_str();
    compress->add_option("--top-k", compress_args.top_k, "Slots kept per patch")
        ->capture_default_str();
    compress
        ->add_option("--seed", compress_args.seed,
                     "Seed for the fresh model when --params is absent")
        ->capture_default_str();
    compress->add_option("--assignments", compress_args.assignments_path,
                         "Write per-patch slot assignments as CSV");
    compress->add_flag("--stats", compress_args.stats,
                       "Print patch count, slot count, compression ratio and "
                       "per-slot loads");

    TrainArgs train_args;
    CLI::App* train =
        app.add_subcommand("train", "Train on the synthetic bag task");
    train->add_option("--slots", train_args.slots, "Slot count K")
        ->capture_default_str();
    train->add_option("--top-k", train_args.top_k, "Slots kept per patch")
        ->capture_default_str();
    train->add_option("--lambda", train_args.lambda, "Auxiliary loss weight")
        ->capture_default_str();
    train->add_option("--seed", train_args.seed, "Run seed")
        ->capture_default_str();
    train->add_option("--epochs", train_args.epochs, "Training epochs")
        ->capture_default_str();
    train->add_option("--lr", train_args.lr, "Adam learning rate")
        ->capture_default_str();
    train->add_option("--batch", train_args.batch, "Bags per batch")
        ->capture_default_str();
    train->add_option("--hidden", train_args.hidden_dim,
                      "Slot MLP hidden width (0 = 2x feature dim)")
        ->capture_default_str();
    train->add_option("--out-dim", train_args.out_dim,
                      "Slot token width (0 = feature dim)")
        ->capture_default_str();
    train
        ->add_option("--bag-patches", train_args.data.n_patches,
                     "Patches per bag")
        ->capture_default_str();
    train->add_option("--dim", train_args.data.feature_dim, "Feature dim")
        ->capture_default_str();
    train->add_option("--clusters", train_args.data.n_clusters,
                      "Pattern clusters")
        ->capture_default_str();
    train
        ->add_option("--evidence-cluster", train_args.data.evidence_cluster,
                     "Index of the evidence cluster")
        ->capture_default_str();
    train
        ->add_option("--evidence-fraction", train_args.data.evidence_fraction,
                     "Evidence patch fraction in positive bags")
        ->capture_default_str();
    train
        ->add_option("--separation", train_args.data.cluster_separation,
                     "Cluster centroid scale")
        ->capture_default_str();
    train->add_option("--label-noise", train_args.data.label_noise,
                      "Label flip probability")
        ->capture_default_str();
    train->add_option("--train-bags", train_args.data.train_bags, "Train bags")
        ->capture_default_str();
    train->add_option("--val-bags", train_args.data.val_bags, "Validation bags")
        ->capture_default_str();
    train->add_option("--test-bags", train_args.data.test_bags, "Test bags")
        ->capture_default_str();
    train->add_option("--report", train_args.report_path,
                      "Write the training report to this path");
    train->add_option("--save-params", train_args.params_path,
                      "Write learned parameters to this path");

    GradcheckArgs grad_args;
    CLI::App* gradcheck = app.add_subcommand(
        "gradcheck", "Certify analytic gradients against finite differences");
    gradcheck->add_option("--seed", grad_args.seed, "Instance seed")
        ->capture_default_str();
    gradcheck->add_option("--n", grad_args.n, "Patches per bag")
        ->capture_default_str();
    gradcheck->add_option("--d", grad_args.d, "Feature dim")
        ->capture_default_str();
    gradcheck->add_option("--slots", grad_args.slots, "Slot count K")
        ->capture_default_str();
    gradcheck->add_option("--classes", grad_args.classes, "Class count")
        ->capture_default_str();
    gradcheck->add_option("--bags", grad_args.bags, "Bag count")
        ->capture_default_str();
    gradcheck->add_option("--top-k", grad_args.top_k, "Slots kept per patch")
        ->capture_default_str();
    gradcheck->add_option("--tol", grad_args.tol, "Relative tolerance")
        ->capture_default_str();
    gradcheck->add_option("--step", grad_args.h, "Finite difference step")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << '\n';
        return 2;
    }

    try {
        compress_args.slots_explicit = compress->count("--slots") > 0;
        if (compress->parsed()) return run_compress(compress_args);
        if (train->parsed()) return run_train(train_args);
        if (gradcheck->parsed()) return run_gradcheck(grad_args);
    } catch (const ssa::InvalidConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const ssa::NumericalError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const ssa::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
