#include <doctest.h>

#include "dsagen/error.hpp"
#include "dsagen/netmodel.hpp"

#include <fstream>
#include <random>
#include <sstream>

using namespace dsagen;
using namespace dsagen::netmodel;

namespace {

const char* kTwoBus = R"(
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0  0 0 0 1 1 0 230 1 1.1 0.9;
  2 1 50 0 0 0 1 1 0 230 1 1.1 0.9;
];
mpc.gen = [
  1 0 0 100 -100 1.0 100 1 200 0;
];
mpc.branch = [
  1 2 0 0.1 0 200 200 200 0 0 1 -60 60;
];
mpc.gencost = [
  2 0 0 3 0.01 10 0;
];
)";

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string replace_once(std::string s, const std::string& from, const std::string& to) {
    s.replace(s.find(from), from.size(), to);
    return s;
}

// Textbook Y-bus: inject unit voltage at bus k with all others grounded and
// collect the terminal currents of every pi-section element by element.
Eigen::MatrixXcd oracle_ybus(const std::string& case_text) {
    auto table = [&](const std::string& name) {
        std::vector<std::vector<double>> rows;
        const auto start = case_text.find("mpc." + name + " = [");
        const auto stop = case_text.find("];", start);
        std::istringstream body(case_text.substr(start, stop - start));
        std::string line;
        std::getline(body, line);
        while (std::getline(body, line)) {
            if (auto c = line.find('%'); c != std::string::npos) line.resize(c);
            for (char& ch : line) if (ch == ';') ch = ' ';
            std::istringstream ls(line);
            std::vector<double> r;
            double v;
            while (ls >> v) r.push_back(v);
            if (!r.empty()) rows.push_back(r);
        }
        return rows;
    };
    const auto bus = table("bus");
    const auto br = table("branch");
    const double base = 100.0;
    const int n = static_cast<int>(bus.size());
    auto pos = [&](double id) {
        for (int i = 0; i < n; ++i) if (bus[i][0] == id) return i;
        return -1;
    };
    Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(n, n);
    for (int k = 0; k < n; ++k) {
        Eigen::VectorXcd V = Eigen::VectorXcd::Zero(n);
        V[k] = 1.0;
        Eigen::VectorXcd I = Eigen::VectorXcd::Zero(n);
        for (const auto& r : br) {
            const int f = pos(r[0]), t = pos(r[1]);
            const std::complex<double> z(r[2], r[3]);
            const double a = r[8] == 0.0 ? 1.0 : r[8];
            const std::complex<double> tap = std::polar(a, r[9] * M_PI / 180.0);
            // Ideal transformer on the from side: internal node voltage V_f / tap.
            const std::complex<double> vi = V[f] / tap;
            const std::complex<double> i_series = (vi - V[t]) / z;
            const std::complex<double> i_sh_from = std::complex<double>(0.0, r[4] / 2.0) * vi;
            const std::complex<double> i_sh_to = std::complex<double>(0.0, r[4] / 2.0) * V[t];
            I[f] += (i_series + i_sh_from) / std::conj(tap);
            I[t] += -i_series + i_sh_to;
        }
        for (int i = 0; i < n; ++i) I[i] += std::complex<double>(bus[i][4], bus[i][5]) / base * V[i];
        Y.col(k) = I;
    }
    return Y;
}

}  // namespace

TEST_CASE("two-bus case parses to two buses and one line") {
    const NetworkModel m = parse_case(kTwoBus, {1.0});
    CHECK(m.n_buses() == 2);
    CHECK(m.n_lines() == 1);
    CHECK(m.n_gens() == 1);
    CHECK(m.n_loads() == 1);
    CHECK(m.slack_gen() == 0);
    CHECK(m.loads()[0].p_nominal == doctest::Approx(50.0));
}

TEST_CASE("load scaling is applied at parse time") {
    const NetworkModel m = parse_case(kTwoBus);
    CHECK(m.loads()[0].p_nominal == doctest::Approx(40.0));
}

TEST_CASE("nine-bus case has 9 buses, 3 generators, 9 branches") {
    const NetworkModel m = load_case_file(DSAGEN_DATA_DIR "/case9.m");
    CHECK(m.n_buses() == 9);
    CHECK(m.n_gens() == 3);
    CHECK(m.n_lines() == 9);
    CHECK(m.n_loads() == 3);
    CHECK(m.layout().dimension() == 11);
}

TEST_CASE("structural errors are reported") {
    SUBCASE("two slack buses") {
        const std::string text = replace_once(kTwoBus, "2 1 50", "2 3 50");
        try {
            parse_case(text);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(std::string(e.what()) == "multiple slack buses");
        }
    }
    SUBCASE("missing slack") {
        CHECK_THROWS_WITH_AS(parse_case(replace_once(kTwoBus, "1 3 0", "1 2 0")), "missing slack bus", Error);
    }
    SUBCASE("duplicate ids") {
        CHECK_THROWS_WITH_AS(parse_case(replace_once(kTwoBus, "2 1 50", "1 1 50")), "duplicate bus id 1", Error);
    }
    SUBCASE("malformed row names the table") {
        try {
            parse_case(replace_once(kTwoBus, "1 2 0 0.1 0 200", "1 2 0 0.1 zz 200"));
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Parse);
            CHECK(std::string(e.what()).find("branch") != std::string::npos);
        }
    }
    SUBCASE("islanded bus") {
        std::string text = replace_once(kTwoBus, "2 1 50 0 0 0 1 1 0 230 1 1.1 0.9;",
                                        "2 1 50 0 0 0 1 1 0 230 1 1.1 0.9;\n 3 1 0 0 0 0 1 1 0 230 1 1.1 0.9;");
        CHECK_THROWS_WITH_AS(parse_case(text), "islanded network", Error);
    }
}

TEST_CASE("single reactance gives the textbook two-port") {
    const NetworkModel m = parse_case(kTwoBus);
    const auto& Y = m.admittance();
    CHECK(std::abs(Y(0, 0) - Complex(0, -10)) < 1e-12);
    CHECK(std::abs(Y(0, 1) - Complex(0, 10)) < 1e-12);
    CHECK(std::abs(Y(1, 0) - Complex(0, 10)) < 1e-12);
    CHECK(std::abs(Y(1, 1) - Complex(0, -10)) < 1e-12);
}

TEST_CASE("line charging adds half the susceptance at each end") {
    const NetworkModel m = parse_case(replace_once(kTwoBus, "1 2 0 0.1 0 200", "1 2 0 0.1 0.2 200"));
    const auto& Y = m.admittance();
    CHECK(std::abs(Y(0, 0) - Complex(0, -9.9)) < 1e-12);
    CHECK(std::abs(Y(1, 1) - Complex(0, -9.9)) < 1e-12);
    CHECK(std::abs(Y(0, 1) - Complex(0, 10)) < 1e-12);
}

TEST_CASE("nine-bus admittance matches an element-wise current-injection builder") {
    const std::string text = read_file(DSAGEN_DATA_DIR "/case9.m");
    const NetworkModel m = parse_case(text);
    const Eigen::MatrixXcd ref = oracle_ybus(text);
    REQUIRE(ref.rows() == 9);
    CHECK((m.admittance() - ref).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("tap and phase shift agree with the current-injection builder") {
    std::string text = replace_once(kTwoBus, "1 2 0 0.1 0 200 200 200 0 0", "1 2 0.01 0.1 0.05 200 200 200 1.05 7.5");
    text = replace_once(text, "1 3 0  0 0 0", "1 3 0  0 0.01 0.2");
    const NetworkModel m = parse_case(text);
    CHECK((m.admittance() - oracle_ybus(text)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("admittance row sums equal the shunt elements") {
    // With every line shorted (all bus voltages equal) only shunts draw current.
    const NetworkModel m = load_case_file(DSAGEN_DATA_DIR "/case9.m");
    Eigen::VectorXcd expected = Eigen::VectorXcd::Zero(m.n_buses());
    for (const auto& line : m.lines()) {
        expected[m.bus_index(line.from_bus)] += Complex(0, line.b_charging / 2);
        expected[m.bus_index(line.to_bus)] += Complex(0, line.b_charging / 2);
    }
    const Eigen::VectorXcd sums = m.admittance().rowwise().sum();
    CHECK((sums - expected).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("encode/decode round trip is bit-identical") {
    const NetworkModel m = load_case_file(DSAGEN_DATA_DIR "/case9.m");
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd v(11);
        for (auto& e : v) e = u(rng);
        const OperatingPoint op = encode(m, v);
        const Setpoints sp = decode(m, op);
        const OperatingPoint back = encode(m, sp);
        CHECK(std::memcmp(back.x.data(), v.data(), sizeof(double) * 11) == 0);
    }
}

TEST_CASE("encode rejects a wrong length") {
    const NetworkModel m = load_case_file(DSAGEN_DATA_DIR "/case9.m");
    CHECK_THROWS_AS(encode(m, Eigen::VectorXd::Zero(10)), Error);
}

TEST_CASE("layout names and hash are stable") {
    const NetworkModel a = load_case_file(DSAGEN_DATA_DIR "/case9.m");
    const NetworkModel b = load_case_file(DSAGEN_DATA_DIR "/case9.m");
    const std::vector<std::string> expected{"PG_2", "PG_3", "VG_1", "VG_2", "VG_3", "PD_5",
                                            "PD_7", "PD_9", "QD_5", "QD_7", "QD_9"};
    CHECK(a.layout().names() == expected);
    CHECK(a.layout().hash() == b.layout().hash());
    CHECK((a.admittance() - b.admittance()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("unrated lines and wide angle limits get defaults") {
    const NetworkModel m = parse_case(replace_once(kTwoBus, "1 2 0 0.1 0 200 200 200 0 0 1 -60 60",
                                                   "1 2 0 0.1 0 0 0 0 0 0 1 -360 360"));
    CHECK(std::isinf(m.lines()[0].s_max));
    CHECK(m.lines()[0].theta_max == doctest::Approx(M_PI / 3));
    CHECK(m.lines()[0].theta_min == doctest::Approx(-M_PI / 3));
}
