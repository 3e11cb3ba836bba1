#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dsagen::netmodel {

using Complex = std::complex<double>;

enum class BusKind { Slack, Generator, Load };

struct Bus {
    int id = 0;
    BusKind kind = BusKind::Load;
    double gs = 0.0;  ///< shunt conductance, p.u. at V = 1
    double bs = 0.0;  ///< shunt susceptance, p.u. at V = 1
    double v_min = 0.9;
    double v_max = 1.1;
    double vm0 = 1.0;
    double va0 = 0.0;  ///< rad
};

/// Version-2 polynomial cost, c2*P^2 + c1*P + c0 with P in MW.
struct CostCoeffs {
    double c2 = 0.0;
    double c1 = 0.0;
    double c0 = 0.0;
};

struct Generator {
    int id = 0;  ///< 1-based row of the in-service generator table
    int bus_id = 0;
    double p_min = 0.0;  ///< MW
    double p_max = 0.0;
    double q_min = 0.0;  ///< MVAr
    double q_max = 0.0;
    double v_set = 1.0;  ///< p.u.
    double p0 = 0.0;     ///< case dispatch, MW
    double q0 = 0.0;
    CostCoeffs cost;
};

struct Line {
    int from_bus = 0;
    int to_bus = 0;
    Complex z{0.0, 0.0};      ///< series impedance, p.u.
    double b_charging = 0.0;  ///< total line charging, p.u.
    double s_max = 0.0;       ///< MVA; +inf when the case gives no rating
    double tap = 1.0;
    double shift = 0.0;  ///< rad
    double theta_min = 0.0;
    double theta_max = 0.0;
};

struct LoadPoint {
    int bus_id = 0;
    double p_nominal = 0.0;  ///< MW, after load scaling
    double q_nominal = 0.0;  ///< MVAr, after load scaling
};

struct CaseOptions {
    double load_scale = 0.80;
};

/// Named setpoints of an operating point, all in p.u.
struct Setpoints {
    std::vector<double> pg;  ///< non-slack generators, generator order
    std::vector<double> vg;  ///< all generators
    std::vector<double> pd;  ///< loads, load order
    std::vector<double> qd;
};

/// Fixed index map of the input vector x = [PG (non-slack); VG; PD; QD].
class InputLayout {
public:
    InputLayout() = default;
    InputLayout(std::vector<int> nonslack_gens, int n_gens, std::vector<std::string> names);

    int dimension() const { return static_cast<int>(names_.size()); }
    int n_pg() const { return static_cast<int>(nonslack_gens_.size()); }
    int n_vg() const { return n_gens_; }
    int n_loads() const { return (dimension() - n_pg() - n_vg()) / 2; }

    int pg_offset() const { return 0; }
    int vg_offset() const { return n_pg(); }
    int pd_offset() const { return n_pg() + n_vg(); }
    int qd_offset() const { return n_pg() + n_vg() + n_loads(); }

    /// Generator index (into NetworkModel::generators) of PG coordinate k.
    int pg_generator(int k) const { return nonslack_gens_.at(k); }
    /// PG coordinate of generator g, or -1 for the slack generator.
    int pg_coordinate(int gen) const;

    const std::vector<std::string>& names() const { return names_; }
    /// FNV-1a hash of the ordered coordinate names.
    std::uint64_t hash() const;

private:
    std::vector<int> nonslack_gens_;
    int n_gens_ = 0;
    std::vector<std::string> names_;
};

/// The input vector x (p.u.) tied to a layout dimension.
struct OperatingPoint {
    Eigen::VectorXd x;
};

class NetworkModel {
public:
    NetworkModel(double base_mva, std::vector<Bus> buses, std::vector<Generator> generators,
                 std::vector<Line> lines, std::vector<LoadPoint> loads);

    double base_mva() const { return base_mva_; }
    const std::vector<Bus>& buses() const { return buses_; }
    const std::vector<Generator>& generators() const { return generators_; }
    const std::vector<Line>& lines() const { return lines_; }
    const std::vector<LoadPoint>& loads() const { return loads_; }
    const Eigen::MatrixXcd& admittance() const { return Y_; }
    const InputLayout& layout() const { return layout_; }

    int n_buses() const { return static_cast<int>(buses_.size()); }
    int n_gens() const { return static_cast<int>(generators_.size()); }
    int n_lines() const { return static_cast<int>(lines_.size()); }
    int n_loads() const { return static_cast<int>(loads_.size()); }

    int slack_gen() const { return slack_gen_; }
    int slack_bus() const { return slack_bus_; }
    /// Index into buses() of a bus id; throws for unknown ids.
    int bus_index(int bus_id) const;
    /// Generator indices attached to each bus index.
    const std::vector<std::vector<int>>& gens_at_bus() const { return gens_at_bus_; }
    /// Load index at each bus index, or -1.
    const std::vector<int>& load_at_bus() const { return load_at_bus_; }

private:
    double base_mva_;
    std::vector<Bus> buses_;
    std::vector<Generator> generators_;
    std::vector<Line> lines_;
    std::vector<LoadPoint> loads_;
    std::vector<int> bus_ids_sorted_;
    std::vector<int> bus_pos_sorted_;
    std::vector<std::vector<int>> gens_at_bus_;
    std::vector<int> load_at_bus_;
    int slack_gen_ = -1;
    int slack_bus_ = -1;
    Eigen::MatrixXcd Y_;
    InputLayout layout_;
};

/// Parses MATPOWER-style case text (bus, gen, branch, gencost tables).
NetworkModel parse_case(std::string_view text, const CaseOptions& options = {});
NetworkModel load_case_file(const std::string& path, const CaseOptions& options = {});

/// Bus admittance matrix (p.u.) of the in-service network; throws on islands.
Eigen::MatrixXcd build_admittance(const NetworkModel& model);

/// Per-line pi-model two-port: I_from = yff*V_f + yft*V_t, I_to = ytf*V_f + ytt*V_t.
struct BranchAdmittance {
    Complex yff, yft, ytf, ytt;
};
BranchAdmittance branch_admittance(const Line& line);

OperatingPoint encode(const NetworkModel& model, const Setpoints& values);
OperatingPoint encode(const NetworkModel& model, const Eigen::VectorXd& values);
Setpoints decode(const NetworkModel& model, const OperatingPoint& op);

/// Case dispatch with scaled loads.
OperatingPoint nominal_point(const NetworkModel& model);

/// Axis-aligned box of the input space.
struct Box {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    bool contains(const Eigen::VectorXd& x, double tol = 0.0) const;
    Eigen::VectorXd clamp(const Eigen::VectorXd& x) const;
};

/// Generator limits plus a +/- load_range band around the scaled loads.
Box input_box(const NetworkModel& model, double load_range);

}  // namespace dsagen::netmodel
