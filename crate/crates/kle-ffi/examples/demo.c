/* Build (from the workspace root, after `cargo build -p kle-ffi`):
 *   cc crates/kle-ffi/examples/demo.c -Icrates/kle-ffi/include \
 *      target/debug/libkle_ffi.a -lpthread -ldl -lm -o kle-demo
 */
#include <stdio.h>
#include "kle.h"

static int check(KleStatus s, const char *what) {
    if (s != KLE_STATUS_OK) {
        char msg[256];
        kle_last_error_message(msg, sizeof msg);
        fprintf(stderr, "%s: %s (%s)\n", what, kle_status_name(s), msg);
        return 1;
    }
    return 0;
}

int main(void) {
    KleRule *rule = NULL;
    KleTruncated *kle = NULL;
    KleEnsemble *ens = NULL;
    KleKernel kernel = {KLE_KERNEL_KIND_EXPONENTIAL, 1.0, 1.0};
    size_t rank = 0;
    double lambdas[1000];
    double value = 0.0;
    int rc = 1;

    if (check(kle_rule_new(KLE_RULE_KIND_TRAPEZOID, 0.0, 1.0, 1000, &rule), "rule")) goto done;

    KleDecomposition *dec = NULL;
    if (check(kle_nystrom_eigen(&kernel, rule, 1000, &dec), "eigen")) goto done;
    kle_decomposition_lambdas(dec, lambdas, 1000);
    kle_decomposition_free(dec);
    if (check(kle_select_rank(lambdas, 1000, 1.0, 0.99, &rank), "select")) goto done;
    printf("rank %zu\n", rank);

    if (check(kle_truncated_with_threshold(&kernel, rule, 0.0, 0.99, &kle), "truncate")) goto done;
    if (check(kle_sample(kle, 3, 42, &ens), "sample")) goto done;
    if (check(kle_ensemble_evaluate(ens, 0, 0.5, &value), "evaluate")) goto done;
    printf("rho %.6f\n", kle_truncated_rho(kle));
    printf("z0(0.5) %.17g\n", value);

    /* errors carry a status and a message */
    if (kle_ensemble_evaluate(ens, 0, 2.0, &value) == KLE_STATUS_OUT_OF_DOMAIN) printf("out of domain ok\n");
    rc = 0;
done:
    kle_ensemble_free(ens);
    kle_truncated_free(kle);
    kle_rule_free(rule);
    return rc;
}
