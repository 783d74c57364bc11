mod common;

use chrono::Duration;

use common::{lib, returnable, staff, Net};
use interlend_core::ids::UserId;
use interlend_core::request::{Actor, Role};
use interlend_node::node::OperatorAction;
use interlend_node::NodeError;

fn user(name: &str) -> UserId {
    UserId::new(name)
}

#[test]
fn manager_adds_a_lending_operator() {
    let net = Net::new(2);
    let node = &net.nodes[0];
    let secret = node.manage_operators(&staff(0), &lib(0), OperatorAction::Invite, &user("ana"), [Role::BorrowingOperator].into()).unwrap();
    assert!(secret.is_some());
    node.manage_operators(&staff(0), &lib(0), OperatorAction::Add, &user("ana"), [Role::LendingOperator].into()).unwrap();
    let grant = node.engine().directory().grant(&user("ana"), &lib(0)).unwrap();
    assert!(grant.roles.contains(&Role::LendingOperator));
}

#[test]
fn operators_cannot_manage_operators() {
    let net = Net::new(2);
    let node = &net.nodes[0];
    node.manage_operators(&staff(0), &lib(0), OperatorAction::Invite, &user("ana"), [Role::LendingOperator].into()).unwrap();
    node.manage_operators(&staff(0), &lib(0), OperatorAction::Add, &user("ana"), [Role::LendingOperator].into()).unwrap();
    let ana = Actor::User(user("ana"));
    let err = node.manage_operators(&ana, &lib(0), OperatorAction::Invite, &user("bo"), [Role::LendingOperator].into()).unwrap_err();
    assert!(matches!(err, NodeError::Forbidden(_)));
}

#[test]
fn removed_operator_can_no_longer_act() {
    let net = Net::new(2);
    let node = &net.nodes[0];
    node.manage_operators(&staff(0), &lib(0), OperatorAction::Invite, &user("ana"), [Role::BorrowingOperator].into()).unwrap();
    node.manage_operators(&staff(0), &lib(0), OperatorAction::Add, &user("ana"), [Role::BorrowingOperator].into()).unwrap();
    let ana = Actor::User(user("ana"));
    node.create_request(returnable(1), &ana).unwrap();
    node.manage_operators(&staff(0), &lib(0), OperatorAction::Remove, &user("ana"), [Role::BorrowingOperator].into()).unwrap();
    assert!(matches!(node.create_request(returnable(2), &ana), Err(NodeError::Engine(_) | NodeError::Forbidden(_))));
    let err = node.create_request(returnable(2), &ana).unwrap_err();
    assert_eq!(err.http_status(), 403);
}

#[test]
fn invitation_takes_effect_at_first_sign_in() {
    let net = Net::new(2);
    let node = &net.nodes[0];
    let secret = node
        .manage_operators(&staff(0), &lib(0), OperatorAction::Invite, &user("cy"), [Role::BorrowingOperator].into())
        .unwrap()
        .unwrap();
    let cy = Actor::User(user("cy"));
    assert_eq!(node.create_request(returnable(1), &cy).unwrap_err().http_status(), 403);
    let (token, _) = node.issue_token(&user("cy"), &secret).unwrap();
    assert_eq!(node.authenticate(Some(&token)).unwrap(), user("cy"));
    node.create_request(returnable(1), &cy).unwrap();
}

#[test]
fn deleting_an_invitation_before_sign_in() {
    let net = Net::new(2);
    let node = &net.nodes[0];
    let secret = node
        .manage_operators(&staff(0), &lib(0), OperatorAction::Invite, &user("di"), [Role::LendingOperator].into())
        .unwrap()
        .unwrap();
    node.manage_operators(&staff(0), &lib(0), OperatorAction::Delete, &user("di"), Default::default()).unwrap();
    node.issue_token(&user("di"), &secret).unwrap();
    assert!(node.engine().directory().grant(&user("di"), &lib(0)).is_none_or(|g| g.roles.is_empty()));
}

#[test]
fn unknown_users_are_reported() {
    let net = Net::new(2);
    let node = &net.nodes[0];
    for action in [OperatorAction::Add, OperatorAction::Remove, OperatorAction::Delete] {
        let err = node.manage_operators(&staff(0), &lib(0), action, &user("ghost"), [Role::LendingOperator].into()).unwrap_err();
        assert!(matches!(err, NodeError::UnknownUser(_)), "{action:?}: {err:?}");
    }
}

#[test]
fn managers_only_manage_their_own_library() {
    let net = Net::new(2);
    let err = net.nodes[0]
        .manage_operators(&staff(1), &lib(0), OperatorAction::Invite, &user("ana"), [Role::LendingOperator].into())
        .unwrap_err();
    assert!(matches!(err, NodeError::Forbidden(_)));
}

#[test]
fn expired_tokens_authorize_nothing() {
    let net = Net::new(2);
    let (token, expires) = net.nodes[0].issue_token(&user("staff@N1"), "sim").unwrap();
    assert!(net.nodes[0].authenticate(Some(&token)).is_ok());
    net.clock.set(expires + Duration::seconds(1));
    assert!(matches!(net.nodes[0].authenticate(Some(&token)), Err(NodeError::Unauthorized(_))));
    assert!(matches!(net.nodes[0].authenticate(None), Err(NodeError::Unauthorized(_))));
}
