#pragma once

// Thin RAII holder for an MPFR value.

#include <mpfr.h>

#include <cmath>
#include <string>

namespace quasispec::detail {

inline mpfr_prec_t bits_for_digits(int digits) {
    return static_cast<mpfr_prec_t>(std::ceil(digits * 3.321928094887362)) + 16;
}

class BigFloat {
  public:
    explicit BigFloat(mpfr_prec_t prec) {
        mpfr_init2(v_, prec);
        mpfr_set_zero(v_, 1);
    }
    BigFloat(const BigFloat& o) {
        mpfr_init2(v_, mpfr_get_prec(o.v_));
        mpfr_set(v_, o.v_, MPFR_RNDN);
    }
    BigFloat& operator=(const BigFloat& o) {
        if (this != &o) {
            mpfr_set_prec(v_, mpfr_get_prec(o.v_));
            mpfr_set(v_, o.v_, MPFR_RNDN);
        }
        return *this;
    }
    ~BigFloat() { mpfr_clear(v_); }

    mpfr_ptr get() { return v_; }
    mpfr_srcptr get() const { return v_; }
    mpfr_prec_t prec() const { return mpfr_get_prec(v_); }
    double to_double() const { return mpfr_get_d(v_, MPFR_RNDN); }

    std::string to_string(int digits) const {
        mpfr_exp_t e = 0;
        char* s = mpfr_get_str(nullptr, &e, 10, static_cast<size_t>(digits), v_, MPFR_RNDN);
        std::string m(s);
        mpfr_free_str(s);
        bool neg = !m.empty() && m[0] == '-';
        if (neg) m.erase(0, 1);
        std::string out;
        if (e <= 0) {
            out = "0." + std::string(static_cast<size_t>(-e), '0') + m;
        } else if (static_cast<size_t>(e) >= m.size()) {
            out = m + std::string(static_cast<size_t>(e) - m.size(), '0');
        } else {
            out = m.substr(0, static_cast<size_t>(e)) + "." + m.substr(static_cast<size_t>(e));
        }
        return neg ? "-" + out : out;
    }

  private:
    mpfr_t v_;
};

}  // namespace quasispec::detail
