from .echo_exceptions import *
