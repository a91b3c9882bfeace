#include "sailscf/chem.hpp"

namespace sailscf {

// STO-3G for the supported element set, standard published exponents and
// contraction coefficients (hydrogen at zeta = 1.24).
const std::string& builtin_sto3g() {
    static const std::string text = R"(
H     0
S   3   1.00
      3.42525091         0.15432897
      0.62391373         0.53532814
      0.16885540         0.44463454
****
Li     0
S   3   1.00
     16.1195750          0.15432897
      2.9362007          0.53532814
      0.7946505          0.44463454
SP   3   1.00
      0.6362897         -0.09996723          0.15591627
      0.1478601          0.39951283          0.60768372
      0.0480887          0.70011547          0.39195739
****
C     0
S   3   1.00
     71.6168370          0.15432897
     13.0450960          0.53532814
      3.5305122          0.44463454
SP   3   1.00
      2.9412494         -0.09996723          0.15591627
      0.6834831          0.39951283          0.60768372
      0.2222899          0.70011547          0.39195739
****
N     0
S   3   1.00
     99.1061690          0.15432897
     18.0523120          0.53532814
      4.8856602          0.44463454
SP   3   1.00
      3.7804559         -0.09996723          0.15591627
      0.8784966          0.39951283          0.60768372
      0.2857144          0.70011547          0.39195739
****
O     0
S   3   1.00
    130.7093200          0.15432897
     23.8088610          0.53532814
      6.4436083          0.44463454
SP   3   1.00
      5.0331513         -0.09996723          0.15591627
      1.1695961          0.39951283          0.60768372
      0.3803890          0.70011547          0.39195739
****
F     0
S   3   1.00
    166.6791300          0.15432897
     30.3608120          0.53532814
      8.2168207          0.44463454
SP   3   1.00
      6.4648032         -0.09996723          0.15591627
      1.4997140          0.39951283          0.60768372
      0.4885885          0.70011547          0.39195739
****
)";
    return text;
}

} // namespace sailscf
