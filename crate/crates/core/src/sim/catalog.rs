use crate::dsl::{ArgPattern, DeclKind, ValidationError};
use crate::rules::CompiledPolicy;
use crate::value::Ty;

/// The simulated device's API surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Api {
    SendTextMessage,
    SetWifiEnabled,
    DialCall,
    EndCall,
    RequestUrl,
    OpenFile,
    LaunchApp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ApiSpec {
    pub api: Api,
    pub namespace: &'static str,
    pub method: &'static str,
    pub params: &'static [(&'static str, Ty)],
    pub ret: Ty,
    pub effect: &'static str,
}

impl ApiSpec {
    /// `Namespace.method`, as written in traces.
    pub fn call_name(&self) -> String {
        format!("{}.{}", self.namespace, self.method)
    }
}

pub const CATALOG: &[ApiSpec] = &[
    ApiSpec {
        api: Api::SendTextMessage,
        namespace: "SmsManager",
        method: "sendTextMessage",
        params: &[("dest", Ty::Str), ("body", Ty::Str)],
        ret: Ty::Bool,
        effect: "counts a sent message for the app; fails on an empty destination",
    },
    ApiSpec {
        api: Api::SetWifiEnabled,
        namespace: "WifiManager",
        method: "setWifiEnabled",
        params: &[("enabled", Ty::Bool)],
        ret: Ty::Bool,
        effect: "sets the wifi_enabled device attribute",
    },
    ApiSpec {
        api: Api::DialCall,
        namespace: "TelephonyManager",
        method: "dialCall",
        params: &[("number", Ty::Str)],
        ret: Ty::Bool,
        effect: "starts a call on the single line; fails if a call is active",
    },
    ApiSpec {
        api: Api::EndCall,
        namespace: "TelephonyManager",
        method: "endCall",
        params: &[],
        ret: Ty::Bool,
        effect: "ends the active call and accrues its duration; fails if none",
    },
    ApiSpec {
        api: Api::RequestUrl,
        namespace: "WebBrowser",
        method: "requestUrl",
        params: &[("url", Ty::Str)],
        ret: Ty::Bool,
        effect: "counts a page load",
    },
    ApiSpec {
        api: Api::OpenFile,
        namespace: "FileSystem",
        method: "openFile",
        params: &[("path", Ty::Str), ("mode", Ty::Str)],
        ret: Ty::Bool,
        effect: "counts a file open",
    },
    ApiSpec {
        api: Api::LaunchApp,
        namespace: "AppLauncher",
        method: "launchApp",
        params: &[("app_name", Ty::Str)],
        ret: Ty::Bool,
        effect: "brings the named app to the foreground",
    },
];

pub fn lookup(namespace: &str, method: &str) -> Option<&'static ApiSpec> {
    CATALOG.iter().find(|s| s.namespace == namespace && s.method == method)
}

pub fn lookup_call(call: &str) -> Option<&'static ApiSpec> {
    let (ns, m) = call.split_once('.')?;
    lookup(ns, m)
}

pub fn spec_of(api: Api) -> &'static ApiSpec {
    CATALOG.iter().find(|s| s.api == api).expect("every api is catalogued")
}

/// Checks every event pattern of `cp` against the catalog.
pub fn check_policy(cp: &CompiledPolicy) -> Vec<ValidationError> {
    let spec = &cp.source.spec;
    let mut errors = Vec::new();
    for (i, e) in cp.events.iter().enumerate() {
        let span = spec.span(DeclKind::Event, i);
        let Some(api) = lookup(&e.pattern.namespace, &e.pattern.method) else {
            errors.push(ValidationError::UnknownApi {
                span,
                event: e.name.clone(),
                api: format!("{}.{}", e.pattern.namespace, e.pattern.method),
            });
            continue;
        };
        if let ArgPattern::Exact(params) = &e.pattern.args {
            if params.len() != api.params.len() {
                errors.push(ValidationError::ArityMismatch {
                    span,
                    event: e.name.clone(),
                    expected: api.params.len(),
                    found: params.len(),
                });
            } else {
                for (p, (_, ty)) in params.iter().zip(api.params) {
                    if p.ty != *ty {
                        errors.push(ValidationError::TypeError {
                            span,
                            decl: e.name.clone(),
                            detail: format!("parameter `{}` is {} but {} passes {}", p.name, p.ty, api.call_name(), ty),
                        });
                    }
                }
            }
        }
        if let Some(b) = &e.return_binding {
            if let Some(p) = e.header_params.iter().find(|p| &p.name == b) {
                if p.ty != api.ret {
                    errors.push(ValidationError::TypeError {
                        span,
                        decl: e.name.clone(),
                        detail: format!("return binding `{b}` is {} but {} returns {}", p.ty, api.call_name(), api.ret),
                    });
                }
            }
        }
    }
    errors
}
