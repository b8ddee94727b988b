#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include <esreg/analysis.hpp>
#include <esreg/csv.hpp>
#include <esreg/simgen.hpp>

using namespace esreg;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code = -1;
    std::string out;
    std::string err;
};

fs::path scratch() {
    const fs::path d = fs::temp_directory_path() / ("esreg_cli_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

CliRun cli(const std::string& args) {
    static int counter = 0;
    const fs::path dir = scratch();
    const fs::path out = dir / ("out" + std::to_string(counter) + ".txt");
    const fs::path err = dir / ("err" + std::to_string(counter++) + ".txt");
    const std::string cmd = std::string("\"") + ESREG_CLI_PATH + "\" " + args + " > \"" + out.string() + "\" 2> \"" +
                            err.string() + "\"";
    const int status = std::system(cmd.c_str());
    CliRun r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

std::string data_file(const std::string& name) { return std::string(ESREG_TEST_DATA_DIR) + "/" + name; }

CsvData parse(const std::string& text, CsvOptions opt) {
    std::istringstream in(text);
    return read_csv(in, opt);
}

CsvOptions resp(const std::string& r) {
    CsvOptions o;
    o.response = r;
    return o;
}

std::string write_sim(const std::string& name, Index n, Index p, Index s, double tau, std::uint64_t seed) {
    SimScenario sc{n, p, s, tau, Design::abs_normal_ar08};
    sc.seed = seed;
    const Dataset ds = simulate_dataset(sc, make_truth(sc), 0);
    const fs::path f = scratch() / name;
    std::ofstream os(f);
    write_csv(os, ds);
    return f.string();
}

std::string input_error_message(const std::string& text, const CsvOptions& opt) {
    try {
        parse(text, opt);
    } catch (const InputError& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST(Csv, QuotedFieldsAndWhitespace) {
    const CsvData d = parse("\"y\", \"a,b\" ,c\n1.5,\"2\",3\n 2.5 , 4 ,\"-1e-1\"\n", resp("y"));
    ASSERT_EQ(d.data.p(), 3);
    EXPECT_EQ(d.data.column_names()[1], "a,b");
    EXPECT_EQ(d.data.y()[1], 2.5);
    EXPECT_EQ(d.data.X()(1, 2), -0.1);
    EXPECT_EQ(d.data.X()(0, 0), 1.0);
}

TEST(Csv, CategoricalDummiesWithLexicographicBaseline) {
    const std::string text = "y,g,x\n1,b,0.1\n2,a,0.2\n3,c,0.3\n4,b,0.4\n";
    const CsvData d = parse(text, resp("y"));
    const auto& names = d.data.column_names();
    ASSERT_EQ(d.data.p(), 4);
    EXPECT_EQ(names[1], "g=b");
    EXPECT_EQ(names[2], "g=c");
    EXPECT_EQ(names[3], "x");
    EXPECT_EQ(d.expansions.at("g").size(), 2u);
    EXPECT_EQ(d.data.X()(0, 1), 1.0);
    EXPECT_EQ(d.data.X()(1, 1), 0.0);
    EXPECT_EQ(d.data.X()(1, 2), 0.0);
    EXPECT_EQ(d.data.X()(2, 2), 1.0);

    CsvOptions o = resp("y");
    o.baseline["g"] = "c";
    const CsvData e = parse(text, o);
    EXPECT_EQ(e.data.column_names()[1], "g=a");
    EXPECT_EQ(e.data.column_names()[2], "g=b");

    o.baseline["g"] = "zzz";
    EXPECT_THROW(parse(text, o), InputError);
}

TEST(Csv, ForcedCategoricalAndMissingLevel) {
    const std::string text = "y,k\n1,1\n2,2\n3,NA\n4,1\n";
    CsvOptions o = resp("y");
    o.categorical.insert("k");
    const CsvData d = parse(text, o);
    ASSERT_EQ(d.data.p(), 3);
    EXPECT_EQ(d.data.column_names()[1], "k=2");
    EXPECT_EQ(d.data.column_names()[2], "k=NA");
    EXPECT_EQ(d.data.X()(2, 2), 1.0);
}

TEST(Csv, ErrorsNameLineAndColumn) {
    const std::string miss = input_error_message("y,x1,x2\n1,2,3\n4,,6\n", resp("y"));
    EXPECT_NE(miss.find("line 3, column 2 ('x1')"), std::string::npos) << miss;
    const std::string bad_y = input_error_message("y,x\n1,2\nfoo,3\n", resp("y"));
    EXPECT_NE(bad_y.find("line 3, column 1 ('y')"), std::string::npos) << bad_y;
    const std::string na_y = input_error_message("x,y\n1,2\n3,NA\n", resp("y"));
    EXPECT_NE(na_y.find("line 3, column 2 ('y')"), std::string::npos) << na_y;
    EXPECT_NE(input_error_message("y,x\n1,2\n3\n", resp("y")).find("line 3"), std::string::npos);
    EXPECT_NE(input_error_message("y,x\n1,2\n3,4\n", resp("z")).find("'z'"), std::string::npos);
    EXPECT_NE(input_error_message("y,x,x\n1,2,3\n3,4,5\n", resp("y")).find("duplicate"), std::string::npos);
    EXPECT_NE(input_error_message("y,x\n1,\"2\n3,4\n", resp("y")).find("unterminated"), std::string::npos);
    EXPECT_THROW(parse("y,x\n1,2\n", resp("y")), InputError);
    EXPECT_THROW(parse("", resp("y")), InputError);
}

TEST(Csv, RoundTripPreservesDataAndFit) {
    SimScenario sc{120, 8, 3, 0.2, Design::abs_normal_ar08};
    const Dataset ds = simulate_dataset(sc, make_truth(sc), 0);
    std::ostringstream os;
    write_csv(os, ds);
    const CsvData back = parse(os.str(), resp("y"));
    EXPECT_EQ(back.data.X(), ds.X());
    EXPECT_EQ(back.data.y(), ds.y());
    const QuantileLevel lv(0.2);
    EXPECT_EQ(fit_two_step(back.data, lv, 0.02, 0.04).theta_hat.values, fit_two_step(ds, lv, 0.02, 0.04).theta_hat.values);
}

TEST(Cli, FitMatchesGoldenFixture) {
    const json golden = json::parse(slurp(data_file("fixture20_golden.json")));
    const CliRun r = cli("fit --input \"" + data_file("fixture20.csv") +
                      "\" --response y --tau 0.3 --lambda-q 0.05 --lambda-e 0.1 --standardize off");
    ASSERT_EQ(r.code, 0) << r.err;
    const json out = json::parse(r.out);
    const json& fit = out.at("fit");
    const std::vector<std::string> names{"(Intercept)", "x1", "x2", "x3"};
    for (std::size_t k = 0; k < names.size(); ++k) {
        EXPECT_NEAR(fit.at("beta_hat").at(names[k]).get<double>(), golden.at("beta_hat")[k].get<double>(), 1e-5)
            << names[k];
        EXPECT_NEAR(fit.at("theta_hat").at(names[k]).get<double>(), golden.at("theta_hat")[k].get<double>(), 1e-5)
            << names[k];
    }
    EXPECT_EQ(out.at("schema_version").get<int>(), 1);
    EXPECT_EQ(out.at("config").at("tau").get<double>(), 0.3);
}

TEST(Cli, ExitCodes) {
    EXPECT_EQ(cli("fit --input \"" + data_file("fixture20.csv") + "\" --response nope --tau 0.3").code, 2);
    EXPECT_EQ(cli("fit --input /nonexistent.csv --response y --tau 0.3").code, 2);
    EXPECT_EQ(cli("fit --input \"" + data_file("fixture20.csv") + "\" --response y --tau 1.5").code, 2);
    EXPECT_EQ(cli("frobnicate").code, 2);

    const fs::path bad = scratch() / "bad_design.toml";
    std::ofstream(bad) << "n = 50\np = 5\ns = 2\ntau = 0.2\ndesign = \"spiral\"\nreplications = 1\n";
    const CliRun r = cli("simulate --scenario \"" + bad.string() + "\"");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("spiral"), std::string::npos) << r.err;

    // every CV fold is too small, so each replication fails and the experiment aborts
    const fs::path tiny = scratch() / "tiny.toml";
    std::ofstream(tiny) << "n = 12\np = 5\ns = 2\ntau = 0.2\nreplications = 2\nfolds = 10\n";
    EXPECT_EQ(cli("simulate --scenario \"" + tiny.string() + "\"").code, 3);
}

TEST(Cli, DegenerateInferenceExitsWithFour) {
    const std::string f = write_sim("degenerate.csv", 16, 40, 4, 0.2, 8);
    const CliRun r = cli("infer --input \"" + f +
                      "\" --response y --tau 0.2 --target x2 --lambda-q 1e-4 --lambda-e 1e-4 --lambda-m 1e-4");
    EXPECT_EQ(r.code, 4) << r.err;
    EXPECT_NE(r.err.find("larger sample"), std::string::npos) << r.err;
}

TEST(Cli, SimulateIsByteReproducible) {
    const fs::path sc = scratch() / "small.toml";
    std::ofstream(sc) << "n = 150\np = 20\ns = 3\ntau = 0.2\ndesign = \"abs_normal_ar08\"\nreplications = 3\n"
                         "folds = 5\nmethods = [\"two_step\", \"debiased\"]\ntargets = [2]\n";
    const std::string args = "simulate --scenario \"" + sc.string() + "\" --replications 1 --seed 7";
    const CliRun a = cli(args);
    const CliRun b = cli(args);
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_EQ(a.out, b.out);
    const json j = json::parse(a.out);
    EXPECT_EQ(j.at("config").at("replications").get<int>(), 1);
    const CliRun c = cli(args + " --format csv");
    ASSERT_EQ(c.code, 0) << c.err;
    EXPECT_EQ(c.out.rfind("# ", 0), 0u);
    EXPECT_NE(c.out.find("two_step"), std::string::npos);
    const CliRun other = cli("simulate --scenario \"" + sc.string() + "\" --replications 1 --seed 8");
    EXPECT_NE(a.out, other.out);
}

TEST(Cli, UpperTailIsNegatedLowerTailOfNegatedResponse) {
    const std::string text = slurp(data_file("fixture20.csv"));
    std::istringstream in(text);
    const CsvData d = read_csv(in, resp("y"));
    const fs::path neg = scratch() / "negated.csv";
    {
        std::ofstream os(neg);
        write_csv(os, d.data.with_response(-d.data.y()));
    }
    const std::string fixed = " --response y --lambda-q 0.05 --lambda-e 0.1";
    const CliRun up = cli("fit --input \"" + data_file("fixture20.csv") + "\"" + fixed + " --tau 0.7 --tail upper");
    const CliRun low = cli("fit --input \"" + neg.string() + "\"" + fixed + " --tau 0.3");
    ASSERT_EQ(up.code, 0) << up.err;
    ASSERT_EQ(low.code, 0) << low.err;
    const json a = json::parse(up.out).at("fit");
    const json b = json::parse(low.out).at("fit");
    for (const auto& [name, v] : a.at("theta_hat").items()) {
        EXPECT_NEAR(v.get<double>(), -b.at("theta_hat").at(name).get<double>(), 1e-12) << name;
        EXPECT_NEAR(a.at("beta_hat").at(name).get<double>(), -b.at("beta_hat").at(name).get<double>(), 1e-12) << name;
    }
}

TEST(Cli, InferIntervalsNestAndMatchLibrary) {
    const std::string f = write_sim("infer.csv", 300, 10, 3, 0.2, 21);
    const std::string base = "infer --input \"" + f + "\" --response y --tau 0.2 --target x2 --folds 5 --seed 3";
    const CliRun wide = cli(base + " --alpha 0.05");
    const CliRun narrow = cli(base + " --alpha 0.1");
    ASSERT_EQ(wide.code, 0) << wide.err;
    ASSERT_EQ(narrow.code, 0) << narrow.err;
    const json w = json::parse(wide.out).at("inference")[0];
    const json n = json::parse(narrow.out).at("inference")[0];
    const double wl = w.at("ci")[0], wu = w.at("ci")[1], nl = n.at("ci")[0], nu = n.at("ci")[1];
    EXPECT_LT(wl, nl);
    EXPECT_LT(nu, wu);
    EXPECT_EQ(w.at("theta_tilde").get<double>(), n.at("theta_tilde").get<double>());

    std::ifstream in(f);
    const CsvData d = read_csv(in, resp("y"));
    AnalysisOptions opt;
    opt.tuning.cv.folds = 5;
    opt.seed = 3;
    const FittedModel m = fit_model(d.data, QuantileLevel(0.2), opt);
    const InferenceDetail det = infer_coordinate(m, d.data.find_column("x2"), opt);
    EXPECT_NEAR(det.result.ci_lower, wl, 1e-12);
    EXPECT_NEAR(det.result.ci_upper, wu, 1e-12);
    EXPECT_NEAR(det.result.p_value, w.at("p_value").get<double>(), 1e-12);
}

TEST(Cli, CategoricalTargetExpandsToEveryDummy) {
    std::ostringstream os;
    os << "y,grp,x\n";
    CounterRng rng(5);
    std::normal_distribution<double> nd;
    const char* levels[] = {"lo", "mid", "hi"};
    for (int i = 0; i < 240; ++i) {
        const double x = nd(rng);
        os << (0.5 * (i % 3) + x + nd(rng)) << ',' << levels[i % 3] << ',' << x << '\n';
    }
    const fs::path f = scratch() / "cat.csv";
    std::ofstream(f) << os.str();
    const CliRun r = cli("infer --input \"" + f.string() +
                      "\" --response y --tau 0.3 --target grp --folds 5 --baseline grp=lo --format csv");
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream lines(r.out);
    std::string line;
    std::vector<std::string> rows;
    while (std::getline(lines, line)) {
        if (!line.empty() && line[0] != '#') rows.push_back(line);
    }
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[1].rfind("grp=hi,", 0), 0u);
    EXPECT_EQ(rows[2].rfind("grp=mid,", 0), 0u);
}
