mod common;

use common::{grad_check, LossKind};

fn check(kind: LossKind) {
    let (worst, n) = grad_check(kind);
    assert!(n > 300);
    assert!(worst < 1e-3, "{kind:?}: max relative error {worst:e}");
}

#[test]
fn discriminator_loss() {
    check(LossKind::Discriminator);
    check(LossKind::DiscriminatorLogits);
}

#[test]
fn identity_loss() {
    check(LossKind::Identity);
}

#[test]
fn contrastive_loss() {
    check(LossKind::Contrastive);
}

#[test]
fn total_loss() {
    check(LossKind::Total);
}
